#include "dna/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace dna {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
        throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::rows(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin > end || end > shape_[0]) throw ShapeError("row range out of bounds");
    Shape s = shape_;
    s[0] = end - begin;
    const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
    return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                                    data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

Tensor transpose(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("transpose expects a matrix, got " + shape_string(m.shape()));
    const std::size_t r = m.dim(0), c = m.dim(1);
    Tensor t({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t.at(j, i) = m.at(i, j);
    return t;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
    if (t.rank() == 0) throw ShapeError("gather_rows on scalar");
    const std::size_t stride = t.size() / t.dim(0);
    Shape s = t.shape();
    s[0] = rows.size();
    Tensor out(std::move(s));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= t.dim(0)) throw ShapeError("gather_rows index out of range");
        std::memcpy(out.ptr() + i * stride, t.ptr() + rows[i] * stride, stride * sizeof(double));
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace dna
