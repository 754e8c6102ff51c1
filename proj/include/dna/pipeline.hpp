#pragma once

// The four experiment commands as library calls. The CLI is a thin shell
// around these; tests drive them directly.

#include <filesystem>
#include <functional>
#include <string>

#include "dna/config.hpp"

namespace dna {

using LogFn = std::function<void(const std::string&)>;

struct PreparedData {
    Dataset train;  // preprocessed, canonical order
    Dataset test;
    TrainingData train_data() const;
};

/// Base class for failures the CLI reports with exit code 1.
class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Writes manifest.csv, signals/, split.csv and run_manifest.json into `out`
// (config data.dir when empty).
void generate_data(const RunConfig& cfg, const std::filesystem::path& out = {}, const LogFn& log = {});

// Reads the generated data directory, applies crop/pad and train-split z-scoring.
PreparedData load_prepared(const RunConfig& cfg);

RingFilterBank make_bank(const RunConfig& cfg);

// Trains one ensemble into `<root>/<kind>/`. Refuses to overwrite arm files unless `force`.
void train_command(const RunConfig& cfg, EnsembleKind kind, const std::filesystem::path& root, bool force,
                   const LogFn& log = {});

std::filesystem::path attack_cell_dir(const std::filesystem::path& out, AttackFamily family, double epsilon);

// Attacks the shared base arm for every (family, epsilon) grid cell.
void attack_command(const RunConfig& cfg, const std::filesystem::path& ensemble_root, const std::filesystem::path& out,
                    const LogFn& log = {});

// Writes the metrics CSV and `<report stem>.correlation.json` beside it.
void evaluate_command(const RunConfig& cfg, const std::filesystem::path& ensemble_root,
                      const std::filesystem::path& attacks, const std::filesystem::path& report_csv,
                      const LogFn& log = {});

}  // namespace dna
