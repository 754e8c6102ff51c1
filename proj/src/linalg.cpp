#include "dna/linalg.hpp"

#include <Eigen/SVD>
#include <string>

#include "dna/kernels.hpp"

namespace dna::linalg {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

LeastSquaresFit least_squares_with_intercept(const Tensor& regressor, const Tensor& target, double rcond) {
    if (regressor.rank() != 2 || target.rank() != 2) throw ShapeError("least squares expects matrices");
    const std::size_t n = regressor.dim(0);
    const std::size_t p = regressor.dim(1);
    const std::size_t q = target.dim(1);
    if (target.dim(0) != n)
        throw ShapeError("least squares row mismatch: " + shape_string(regressor.shape()) + " vs " +
                         shape_string(target.shape()));
    if (n <= p + 1)
        throw ShapeError("least squares is underdetermined: N=" + std::to_string(n) + " must exceed P+1=" +
                         std::to_string(p + 1));

    RowMatrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) a(i, j) = regressor.at(i, j);
        a(i, p) = 1.0;
    }
    const Eigen::Map<const RowMatrix> y(target.ptr(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double cutoff = (s.size() ? s(0) : 0.0) * rcond;
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > cutoff) ++rank;

    const auto u = svd.matrixU().leftCols(rank);
    const auto v = svd.matrixV().leftCols(rank);
    const Eigen::MatrixXd uty = u.transpose() * y;
    const Eigen::MatrixXd resid = y - u * uty;
    const Eigen::MatrixXd coef = v * s.head(rank).cwiseInverse().asDiagonal() * uty;

    LeastSquaresFit fit;
    fit.residual = Tensor({n, q});
    fit.coefficients = Tensor({p + 1, q});
    Eigen::Map<RowMatrix>(fit.residual.ptr(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q)) = resid;
    Eigen::Map<RowMatrix>(fit.coefficients.ptr(), static_cast<Eigen::Index>(p + 1), static_cast<Eigen::Index>(q)) =
        coef;
    fit.ss_res = resid.squaredNorm();
    fit.rank = static_cast<std::size_t>(rank);
    return fit;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul shape mismatch: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
    Tensor c({a.dim(0), b.dim(1)});
    kernels::gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.ptr(), b.ptr(), c.ptr());
    return c;
}

double frobenius_squared(const Tensor& a) { return kernels::active().dot(a.ptr(), a.ptr(), a.size()); }

}  // namespace dna::linalg
