#pragma once

// Complementary "ring" filter banks applied by pointwise multiplication in
// the Fourier domain. Responses are real and symmetric about Nyquist, so each
// band is a real, linear, self-adjoint operator and the bands sum to identity.

#include <cstddef>
#include <span>
#include <vector>

#include "dna/autodiff.hpp"

namespace dna {

struct RingFilterBank {
    std::size_t length = 0;         // FFT length (power of two)
    double cutoff = 0.0;            // cycles/sample, in (0, 0.5)
    double transition_width = 0.0;  // raised-cosine width, cycles/sample
    std::vector<std::vector<double>> responses;

    std::size_t num_bands() const noexcept { return responses.size(); }
};

// Normalized frequency of FFT bin k, folded into [0, 0.5].
double bin_frequency(std::size_t k, std::size_t length);

// Band 0 is the raised-cosine low band (1 at or below cutoff - tw/2, 0 at or
// above cutoff + tw/2); band 1 is its complement. With tw = 0 the bin exactly
// at the cutoff belongs to the low band.
RingFilterBank design_bank(std::size_t length, double cutoff, double transition_width, std::size_t num_bands = 2);

// Filters one signal of any length <= bank.length (zero-padded, then cropped).
std::vector<double> apply_band(const RingFilterBank& bank, std::size_t band, std::span<const double> x);
// Row-wise over [N x L] or [N x 1 x L].
Tensor apply_band(const RingFilterBank& bank, std::size_t band, const Tensor& batch);

// Per-band energy (1/Lp) * sum_k H_j[k] |X[k]|^2; sums to ||x||^2.
std::vector<double> band_energy(std::span<const double> x, const RingFilterBank& bank);

namespace ad {
// Differentiable band filter; the backward pass applies the same band.
Var band_filter(Var x, const RingFilterBank& bank, std::size_t band);
}  // namespace ad

}  // namespace dna
