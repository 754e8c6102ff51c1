#pragma once

// Declarative run configuration (JSON, nested sections). Every key has a
// default; unknown keys and type mismatches are rejected with the full key path.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dna/attacks.hpp"
#include "dna/classifier.hpp"
#include "dna/ensemble.hpp"
#include "dna/signal_io.hpp"

#include <json.hpp>

namespace dna {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataSection {
    std::string source = "synthetic";  // synthetic | manifest
    std::string dir = "data";          // where generate-data writes and later commands read
    std::string manifest;              // source == manifest
    SynthConfig synth;
    std::uint64_t seed = 1;
    std::uint64_t split_seed = 2;
    double train_fraction = 0.9;
    std::size_t length = 512;
};

struct BankSection {
    double cutoff = 0.2;
    double transition_width = 0.05;
};

struct AttackSection {
    std::vector<AttackFamily> families{AttackFamily::Pgd, AttackFamily::Sap};
    std::vector<double> epsilons{0.1, 0.25, 0.5, 1.0, 1.5};
    std::size_t steps = 20;
    double alpha_ratio = 0.1;
    std::vector<SmoothingKernel> sap_kernels = default_sap_kernels();
    std::size_t batch_size = 64;

    AttackSpec spec(AttackFamily family, double epsilon) const;
};

struct RunConfig {
    DataSection data;
    ArchConfig arch;
    TrainConfig train;
    BankSection bank;
    AttackSection attack;
    std::vector<EnsembleKind> kinds{EnsembleKind::Cor, EnsembleKind::Dec, EnsembleKind::Fcor, EnsembleKind::Fdec};
    std::string output_root = ".";

    // DNA_OUTPUT_ROOT when set, otherwise output.root.
    std::filesystem::path root() const;
    // Relative paths are taken relative to root().
    std::filesystem::path resolve(const std::filesystem::path& p) const;
    std::filesystem::path data_dir() const { return resolve(data.dir); }
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

// Cross-field checks that do not depend on the data (arch, attack grid, bank).
void validate(const RunConfig& cfg);

}  // namespace dna
