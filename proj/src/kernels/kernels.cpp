#include "dna/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace dna::kernels {
namespace {

const KernelTable* pick_default() {
    if (const char* env = std::getenv("DNA_SIMD")) {
        const std::string v{env};
        if (v == "scalar") return &scalar_table();
        if (v == "avx2") {
            if (avx2_table() && cpu_has_avx2()) return avx2_table();
            throw std::invalid_argument("DNA_SIMD=avx2 requested but AVX2/FMA is unavailable");
        }
        if (v != "auto" && !v.empty()) throw std::invalid_argument("DNA_SIMD must be scalar, avx2 or auto, got '" + v + "'");
    }
    if (avx2_table() && cpu_has_avx2()) return avx2_table();
    return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{pick_default()};
    return table;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Backend backend() { return active().backend; }

void set_backend(Backend b) {
    if (b == Backend::Scalar) {
        current().store(&scalar_table(), std::memory_order_release);
        return;
    }
    if (!avx2_table() || !cpu_has_avx2()) throw std::invalid_argument("AVX2 backend unavailable on this build/CPU");
    current().store(avx2_table(), std::memory_order_release);
}

std::string_view backend_name(Backend b) { return b == Backend::Scalar ? "scalar" : "avx2"; }

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    const auto& t = active();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av != 0.0) t.axpy(av, b + p * n, crow, n);
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    const auto& t = active();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += t.dot(arow, b + j * k, k);
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    const auto& t = active();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av != 0.0) t.axpy(av, brow, c + i * n, n);
        }
    }
}

}  // namespace dna::kernels
