#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dna/tensor.hpp"

namespace dna {

struct Record {
    std::string id;
    std::vector<double> signal;
    int label = 0;
};

struct NormStats {
    double mean = 0.0;
    double std = 1.0;
};

struct Dataset {
    std::vector<Record> records;
    std::vector<std::string> class_names;  // index == label
    std::size_t fixed_length = 0;          // 0 until preprocessed
    NormStats stats;

    std::size_t num_classes() const noexcept { return class_names.size(); }
    std::size_t size() const noexcept { return records.size(); }
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Plain-text signal files: one decimal float per line, shortest round-trip form.
std::vector<double> read_signal(const std::filesystem::path& path);
void write_signal(const std::filesystem::path& path, std::span<const double> signal);
std::string format_double(double v);
double parse_double(std::string_view text);

// Manifest CSV with header `record_id,label,path`; relative paths resolve
// against the manifest's directory. Labels become dense indices in order of
// first appearance.
Dataset load_dataset(const std::filesystem::path& manifest);
// Writes `<dir>/signals/<id>.txt` and `<dir>/manifest.csv`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct SynthConfig {
    std::size_t num_classes = 3;
    std::size_t records_per_class = 50;
    std::size_t length = 512;
    double sample_rate = 128.0;
};

// Deterministic ECG-like strips:
//   0  regular sinus-like beats with P/QRS/T bumps
//   1  irregular, faster RR with no P wave and low-amplitude fibrillatory waves
//   2  class-0 morphology with a wider QRS plus broadband noise at 5 dB SNR
//   3  class-0 morphology dominated by baseline wander
Dataset synthesize(const SynthConfig& cfg, std::uint64_t seed);

// Center-crops or symmetrically zero-pads to `length` (extra pad sample on the right).
std::vector<double> crop_or_pad(std::span<const double> x, std::size_t length);
// Mean and std of all samples after crop/pad; std floored at 1e-8.
NormStats fit_normalization(const Dataset& train, std::size_t length);
Dataset preprocess(const Dataset& dataset, std::size_t length, const NormStats& stats);

struct SplitIndices {
    std::vector<std::size_t> train;  // ascending dataset positions
    std::vector<std::size_t> test;
};
// Label-stratified split; each class contributes round(n * fraction) training
// records, clamped so both sides keep at least one.
SplitIndices split_indices(const Dataset& dataset, double train_fraction, std::uint64_t seed);
Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

// Signals stacked as [N x L] (requires equal lengths) and labels.
Tensor signals_tensor(const Dataset& dataset);
std::vector<int> labels_of(const Dataset& dataset);

}  // namespace dna
