#include "dna/kernels.hpp"

namespace dna::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void relu_scalar(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_scalar(const double* x, const double* gy, double* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0.0) gx[i] += gy[i];
}

constexpr KernelTable kScalar{Backend::Scalar, dot_scalar, axpy_scalar, relu_scalar, relu_backward_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace dna::kernels
