#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace dna::fft {

using Complex = std::complex<double>;

// Full complex spectrum of a real signal. Any length >= 1.
std::vector<Complex> forward(std::span<const double> x);
// Inverse transform normalized by 1/L.
std::vector<Complex> inverse(std::span<const Complex> spectrum);
// Real part of inverse(); callers use it for Hermitian spectra.
std::vector<double> inverse_real(std::span<const Complex> spectrum);

std::size_t next_pow2(std::size_t n);

}  // namespace dna::fft
