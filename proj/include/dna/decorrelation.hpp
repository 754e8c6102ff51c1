#pragma once

// Feature decorrelation between an actively trained model and frozen
// features of previously trained models.
//
// decor_loss(Zr, Zt) = log(SS_total + eps) - log(SS_res + eps), where SS_res
// is the OLS residual of Zt regressed on [Zr, 1] and SS_total = ||Zt||^2.
// pair_loss randomizes which side is the regressor and compresses the
// regressand with a fresh Gaussian projection each step.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dna/autodiff.hpp"
#include "dna/classifier.hpp"

namespace dna {

struct DecorConfig {
    std::size_t r = 50;
    double lambda = 0.2;
    double eps = 1e-5;
    std::uint64_t seed = 13;

    void validate(std::size_t feature_dim) const;
};

/// Frozen features of one trained model over the whole training set. Row i
/// belongs to sample_order[i].
struct FeatureCache {
    std::string model_id;
    std::vector<std::string> sample_order;
    Tensor features;  // N_train x D

    bool operator==(const FeatureCache&) const = default;
};

// 1 - SS_res / SS_total; unclamped.
double correlation_r2(const Tensor& zr, const Tensor& zt);

Var decor_loss(Var zr, Var zt, double eps);

// D x r, entries i.i.d. N(0, std = 1/sqrt(D)).
Tensor draw_projection(std::size_t d, std::size_t r, std::uint64_t seed);

struct PairDraw {
    bool trainable_regresses = false;  // true: decor_loss(Zk, Zi R); false: decor_loss(Zi, Zk R)
    Tensor projection;
};
// Branch and projection derived from one step seed.
PairDraw draw_pair(std::size_t d, std::size_t r, std::uint64_t step_seed);

// Test hooks; production callers leave both empty.
struct PairOverrides {
    std::optional<bool> trainable_regresses;
    const Tensor* projection = nullptr;
};

// zk [N x D] is attached to the model being trained; zi is frozen.
Var pair_loss(Var zk, const Tensor& zi, const DecorConfig& cfg, std::uint64_t step_seed,
              const PairOverrides& overrides = {});

// Arithmetic mean of pair_loss over all previous models' caches; rows are
// fetched at `batch_indices` (training-set positions).
Var ensemble_decor_loss(Var zk, std::span<const FeatureCache> caches, std::span<const std::size_t> batch_indices,
                        const DecorConfig& cfg, std::uint64_t step_seed);

struct LossTerms {
    Var total;
    Var ce;
    std::optional<Var> cor;  // present only when caches are supplied
};

// CE + lambda * L_cor. With no caches the total is the CE node itself.
LossTerms total_loss(Var logits, std::span<const int> labels, Var zk, std::span<const FeatureCache> caches,
                     std::span<const std::size_t> batch_indices, const DecorConfig& cfg, std::uint64_t step_seed);

// `inputs` must already be the model's own (possibly band-filtered) view.
FeatureCache build_cache(const ClassifierParams& params, const Tensor& inputs, std::vector<std::string> sample_order,
                         std::string model_id);

inline constexpr std::uint32_t kCacheFormatVersion = 1;
void save_cache(const FeatureCache& cache, const std::filesystem::path& path);
FeatureCache load_cache(const std::filesystem::path& path);

}  // namespace dna
