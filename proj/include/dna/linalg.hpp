#pragma once

#include <cstddef>

#include "dna/tensor.hpp"

namespace dna::linalg {

/// Ordinary least squares of `target` [N x Q] on [regressor, 1] where
/// regressor is [N x P]. Solved through a thin SVD of the augmented design
/// matrix; singular values below sigma_max * rcond are treated as zero.
struct LeastSquaresFit {
    Tensor residual;      // N x Q, (I - H) target
    Tensor coefficients;  // (P + 1) x Q, last row is the intercept
    double ss_res = 0.0;
    std::size_t rank = 0;
};

inline constexpr double kDefaultRcond = 1e-10;

// Throws ShapeError when N <= P + 1 or the row counts differ.
LeastSquaresFit least_squares_with_intercept(const Tensor& regressor, const Tensor& target,
                                             double rcond = kDefaultRcond);

Tensor matmul(const Tensor& a, const Tensor& b);
double frobenius_squared(const Tensor& a);

}  // namespace dna::linalg
