#include "dna/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace dna::fft {
namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

class Plan {
public:
    Plan(std::size_t n, int sign) : n_(n) {
        buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        if (!buf_) throw std::bad_alloc();
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, sign, FFTW_ESTIMATE);
        if (!plan_) {
            fftw_free(buf_);
            throw std::runtime_error("fftw planning failed");
        }
    }
    ~Plan() {
        {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan_);
        }
        fftw_free(buf_);
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;

    Complex* data() { return reinterpret_cast<Complex*>(buf_); }
    void execute() { fftw_execute(plan_); }
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    fftw_complex* buf_ = nullptr;
    fftw_plan plan_ = nullptr;
};

Plan& plan_for(std::size_t n, int sign) {
    thread_local std::map<std::pair<std::size_t, int>, std::unique_ptr<Plan>> cache;
    auto& slot = cache[{n, sign}];
    if (!slot) slot = std::make_unique<Plan>(n, sign);
    return *slot;
}

}  // namespace

std::vector<Complex> forward(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("fft of empty signal");
    Plan& p = plan_for(x.size(), FFTW_FORWARD);
    Complex* d = p.data();
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = Complex(x[i], 0.0);
    p.execute();
    return {d, d + x.size()};
}

std::vector<Complex> inverse(std::span<const Complex> spectrum) {
    if (spectrum.empty()) throw std::invalid_argument("ifft of empty spectrum");
    Plan& p = plan_for(spectrum.size(), FFTW_BACKWARD);
    Complex* d = p.data();
    std::copy(spectrum.begin(), spectrum.end(), d);
    p.execute();
    const double inv = 1.0 / static_cast<double>(spectrum.size());
    std::vector<Complex> out(d, d + spectrum.size());
    for (auto& v : out) v *= inv;
    return out;
}

std::vector<double> inverse_real(std::span<const Complex> spectrum) {
    const auto c = inverse(spectrum);
    std::vector<double> out(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
    return out;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace dna::fft
