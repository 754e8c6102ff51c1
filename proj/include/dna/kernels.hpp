#pragma once

// Dense inner-loop kernels with a scalar reference implementation and an
// AVX2/FMA variant. The variant is picked once at startup from CPUID and can
// be forced with DNA_SIMD=scalar|avx2 or set_backend().

#include <cstddef>
#include <string_view>

namespace dna::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
    Backend backend;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y[i] = max(x[i], 0)
    void (*relu)(const double* x, double* y, std::size_t n);
    // gx[i] += (x[i] > 0) ? gy[i] : 0
    void (*relu_backward)(const double* x, const double* gy, double* gx, std::size_t n);
};

const KernelTable& scalar_table();
// Null when the translation unit was built without AVX2 support.
const KernelTable* avx2_table();

bool cpu_has_avx2();
const KernelTable& active();
Backend backend();
// Throws std::invalid_argument when the requested backend is unavailable.
void set_backend(Backend b);
std::string_view backend_name(Backend b);

// Row-major GEMM helpers built on the active table. All accumulate into C.
// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

}  // namespace dna::kernels
