#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dna/autodiff.hpp"

namespace dna {

struct ConvBlock {
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    bool operator==(const ConvBlock&) const = default;
};

/// conv blocks (each conv + ReLU, padding kernel/2) -> global average pool ->
/// dense(featureDim) + ReLU [feature layer] -> dense(numClasses).
struct ArchConfig {
    std::vector<ConvBlock> conv_blocks{{8, 7, 2}, {16, 7, 2}, {32, 5, 2}};
    std::size_t feature_dim = 64;
    std::size_t num_classes = 3;
    std::size_t input_length = 512;

    void validate() const;
    bool operator==(const ArchConfig&) const = default;
};

// Layout of `tensors`: for each conv block {weight [C'xCxk], bias [C']},
// then dense1 {weight [C_last x D], bias [D]}, dense2 {weight [D x C], bias [C]}.
struct ClassifierParams {
    ArchConfig arch;
    std::vector<Tensor> tensors;

    bool operator==(const ClassifierParams&) const = default;
};

ClassifierParams init_params(const ArchConfig& arch, std::uint64_t seed);

struct ForwardVars {
    Var logits;    // N x C
    Var features;  // N x D
};

std::vector<Var> bind_params(Graph& g, const ClassifierParams& params, bool trainable);
// x is [N x L].
ForwardVars forward(const ArchConfig& arch, std::span<const Var> params, Var x);

struct ForwardResult {
    Tensor logits;
    Tensor features;
};
// Evaluation pass in chunks of `chunk` rows.
ForwardResult forward(const ClassifierParams& params, const Tensor& x, std::size_t chunk = 256);

// Ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);
std::vector<int> predict(const ClassifierParams& params, const Tensor& x);

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kParamsFormatVersion = 1;
void save_params(const ClassifierParams& params, const std::filesystem::path& path);
ClassifierParams load_params(const std::filesystem::path& path);

}  // namespace dna
