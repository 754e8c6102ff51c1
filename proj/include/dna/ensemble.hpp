#pragma once

// Sequential training of three-arm ensembles and their evaluation.
//
// Arm 0 is always the unfiltered base model trained with cross entropy only.
// Arms 1 and 2 optionally see band 0 / band 1 of a ring filter bank (fcor,
// fdec) and optionally add the decorrelation loss against the frozen feature
// caches of every earlier arm (dec, fdec).

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dna/classifier.hpp"
#include "dna/decorrelation.hpp"
#include "dna/fourier.hpp"

namespace dna {

inline constexpr std::size_t kArms = 3;

enum class EnsembleKind { Cor, Dec, Fcor, Fdec };

std::string_view to_string(EnsembleKind k);
EnsembleKind parse_ensemble_kind(std::string_view s);

struct ArmRole {
    std::optional<std::size_t> band;
    bool decorrelate = false;
    bool operator==(const ArmRole&) const = default;
};

std::array<ArmRole, kArms> arm_roles(EnsembleKind kind);

// The arm's own view of a batch: band-filtered when the role carries a band.
Tensor arm_view(const ArmRole& role, const RingFilterBank& bank, const Tensor& x);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t t = 0;
};

// Bias-corrected Adam. Throws NumericError on non-finite gradients.
void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch_size = 80;
    AdamConfig adam;
    std::uint64_t init_seed = 11;
    std::uint64_t shuffle_seed = 12;
    DecorConfig decor;

    void validate(const ArchConfig& arch, bool decorrelation_active) const;
};

struct TrainingData {
    Tensor inputs;  // N x L, canonical order
    std::vector<int> labels;
    std::vector<std::string> ids;
};

struct CurveRow {
    std::size_t epoch = 0;
    double ce = 0.0;
    std::optional<double> cor;
    double train_accuracy = 0.0;
};

struct ArmResult {
    ClassifierParams params;
    FeatureCache cache;
    std::vector<CurveRow> curve;
};

using ProgressFn = std::function<void(std::size_t arm, const CurveRow&)>;

// `previous` holds the caches of arms 0..k-1 (only read when the role decorrelates).
ArmResult train_arm(std::size_t k, EnsembleKind kind, const TrainingData& data, const ArchConfig& arch,
                    const TrainConfig& cfg, std::span<const FeatureCache> previous, const RingFilterBank& bank,
                    const ProgressFn& progress = {});

std::vector<ArmResult> train_ensemble(EnsembleKind kind, const TrainingData& data, const ArchConfig& arch,
                                      const TrainConfig& cfg, const RingFilterBank& bank,
                                      const ProgressFn& progress = {});

struct MetricsRow {
    double average = 0.0;
    double p1 = 0.0;
    double p2 = 0.0;
    double p3 = 0.0;
    std::size_t n = 0;
};

// correct[arm][sample]; only samples with mask[i] (or all when mask is empty) count.
MetricsRow metrics_from_correctness(const std::vector<std::vector<bool>>& correct, const std::vector<bool>& mask = {});

std::vector<std::vector<bool>> arm_correctness(std::span<const ClassifierParams> arms, EnsembleKind kind,
                                               const RingFilterBank& bank, const Tensor& x, std::span<const int> labels);

MetricsRow evaluate(std::span<const ClassifierParams> arms, EnsembleKind kind, const RingFilterBank& bank,
                    const Tensor& x, std::span<const int> labels, const std::vector<bool>& mask = {});

struct CorrelationReport {
    // r2[i][j]: features of arm j regressed on features of arm i, unclamped.
    std::array<std::array<double, kArms>, kArms> r2{};

    double clamped(std::size_t i, std::size_t j) const;
    // Mean of both directions for a pair, clamped to [0, 1].
    double pair_mean(std::size_t i, std::size_t j) const;
    // Mean over the off-diagonal ordered pairs, clamped per entry.
    double mean_off_diagonal() const;
};

CorrelationReport correlation_report(std::span<const FeatureCache> caches);
// Recomputes each arm's features on its own view of `train_inputs`.
CorrelationReport correlation_report(std::span<const ClassifierParams> arms, EnsembleKind kind,
                                     const RingFilterBank& bank, const Tensor& train_inputs);

}  // namespace dna
