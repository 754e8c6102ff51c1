#include "dna/fourier.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "dna/fft.hpp"

namespace dna {

double bin_frequency(std::size_t k, std::size_t length) {
    const std::size_t folded = std::min(k, length - k);
    return static_cast<double>(folded) / static_cast<double>(length);
}

RingFilterBank design_bank(std::size_t length, double cutoff, double transition_width, std::size_t num_bands) {
    if (length == 0 || (length & (length - 1)) != 0)
        throw std::invalid_argument("filter bank length must be a power of two, got " + std::to_string(length));
    if (num_bands != 2) throw std::invalid_argument("only two-band banks are supported");
    if (transition_width < 0.0) throw std::invalid_argument("transition width must be >= 0");
    const double lo = cutoff - transition_width / 2.0;
    const double hi = cutoff + transition_width / 2.0;
    if (!(lo > 0.0) || !(hi < 0.5))
        throw std::invalid_argument("cutoff +/- transition/2 must lie inside (0, 0.5)");

    RingFilterBank bank{length, cutoff, transition_width, {}};
    std::vector<double> low(length), high(length);
    for (std::size_t k = 0; k < length; ++k) {
        const double f = bin_frequency(k, length);
        double h;
        if (f <= lo)
            h = 1.0;
        else if (f >= hi)
            h = 0.0;
        else
            h = 0.5 * (1.0 + std::cos(std::numbers::pi * (f - lo) / transition_width));
        low[k] = h;
        high[k] = 1.0 - h;
    }
    bank.responses = {std::move(low), std::move(high)};
    return bank;
}

std::vector<double> apply_band(const RingFilterBank& bank, std::size_t band, std::span<const double> x) {
    if (band >= bank.num_bands()) throw std::out_of_range("band index " + std::to_string(band));
    if (x.size() > bank.length)
        throw std::invalid_argument("signal length " + std::to_string(x.size()) + " exceeds bank length " +
                                    std::to_string(bank.length));
    std::vector<double> padded(bank.length, 0.0);
    std::copy(x.begin(), x.end(), padded.begin());
    auto spec = fft::forward(padded);
    const auto& h = bank.responses[band];
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= h[k];
    auto y = fft::inverse_real(spec);
    y.resize(x.size());
    return y;
}

Tensor apply_band(const RingFilterBank& bank, std::size_t band, const Tensor& batch) {
    if (batch.rank() < 2) throw ShapeError("apply_band expects a batch of signals");
    const std::size_t n = batch.dim(0);
    const std::size_t l = batch.dim(batch.rank() - 1);
    if (batch.size() != n * l) throw ShapeError("apply_band expects single-channel signals");
    Tensor out(batch.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = apply_band(bank, band, std::span<const double>(batch.ptr() + i * l, l));
        std::copy(y.begin(), y.end(), out.ptr() + i * l);
    }
    return out;
}

std::vector<double> band_energy(std::span<const double> x, const RingFilterBank& bank) {
    if (x.size() > bank.length) throw std::invalid_argument("signal longer than bank");
    std::vector<double> padded(bank.length, 0.0);
    std::copy(x.begin(), x.end(), padded.begin());
    const auto spec = fft::forward(padded);
    std::vector<double> energy(bank.num_bands(), 0.0);
    const double inv = 1.0 / static_cast<double>(bank.length);
    for (std::size_t j = 0; j < bank.num_bands(); ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < spec.size(); ++k) acc += bank.responses[j][k] * std::norm(spec[k]);
        energy[j] = acc * inv;
    }
    return energy;
}

namespace ad {

Var band_filter(Var x, const RingFilterBank& bank, std::size_t band) {
    Tensor out = apply_band(bank, band, x.value());
    return x.graph().record(std::move(out), {x}, [x, &bank, band](Graph& g, const Tensor& up) {
        if (Tensor* gx = g.adjoint_buffer(x)) {
            const Tensor back = apply_band(bank, band, up);
            for (std::size_t i = 0; i < back.size(); ++i) (*gx)[i] += back[i];
        }
    });
}

}  // namespace ad
}  // namespace dna
