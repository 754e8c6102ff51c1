#pragma once

// L-infinity bounded gradient attacks on a single classifier:
//   PGD  x'_i = clip_eps(x'_{i-1} + alpha * sgn(grad_x L))
//   SAP  the same sign ascent on a latent theta, rendered as
//        x' = x + (1/M) sum_m theta (*) K(s_m, sigma_m)  with Gaussian kernels.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dna/classifier.hpp"
#include "dna/fourier.hpp"

namespace dna {

enum class AttackFamily { Pgd, Sap };

std::string_view to_string(AttackFamily f);
AttackFamily parse_attack_family(std::string_view s);

struct SmoothingKernel {
    std::size_t width = 1;  // odd
    double sigma = 1.0;     // samples
};

struct AttackSpec {
    AttackFamily family = AttackFamily::Pgd;
    double epsilon = 0.0;
    double alpha = 0.0;
    std::size_t steps = 20;
    std::vector<SmoothingKernel> kernels;  // SAP only

    void validate() const;
};

// alpha = eps / 10, 20 steps; SAP gets widths {5,9,13,17,21} with sigma = width / 4.
AttackSpec default_attack_spec(AttackFamily family, double epsilon);
std::vector<SmoothingKernel> default_sap_kernels();

// Discretized Gaussian of odd width s centred at (s-1)/2, normalized to unit sum.
std::vector<double> gaussian_kernel(std::size_t width, double sigma);

/// Model under attack. When `bank` is set the input is band-filtered inside
/// the differentiated graph.
struct AttackTarget {
    const ClassifierParams* params = nullptr;
    const RingFilterBank* bank = nullptr;
    std::optional<std::size_t> band;
};

// x is [N x L]; returns x'. sgn(0) = 0. Throws NumericError on non-finite gradients.
Tensor pgd(const AttackTarget& target, const Tensor& x, std::span<const int> labels, const AttackSpec& spec);
Tensor sap(const AttackTarget& target, const Tensor& x, std::span<const int> labels, const AttackSpec& spec);
Tensor run_attack(const AttackTarget& target, const Tensor& x, std::span<const int> labels, const AttackSpec& spec,
                  std::size_t batch = 64);

// Mean CE per sample of the target on x (no reduction over the batch).
std::vector<double> per_sample_loss(const AttackTarget& target, const Tensor& x, std::span<const int> labels);

struct AttackedSet {
    std::vector<std::string> ids;
    Tensor natural;    // N x L
    Tensor perturbed;  // N x L
    std::vector<int> labels;
    std::vector<bool> mask;  // base model correct on the natural sample
    std::vector<double> linf;
    AttackSpec spec;
    std::string target_model_id;

    std::size_t masked_count() const;
};

AttackedSet craft_set(const AttackTarget& target, const ClassifierParams& base, std::span<const std::string> ids,
                      const Tensor& natural, std::span<const int> labels, const AttackSpec& spec,
                      std::string target_model_id = "arm0");

// Directory layout: natural/<id>.txt, perturbed/<id>.txt and index.csv with
// columns record_id,label,masked,linf_delta.
void save_attacked_set(const AttackedSet& set, const std::filesystem::path& dir);
AttackedSet load_attacked_set(const std::filesystem::path& dir);

}  // namespace dna
