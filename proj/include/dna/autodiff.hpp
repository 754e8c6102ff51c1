#pragma once

// Tape-based reverse-mode differentiation over dna::Tensor.
//
// Nodes are appended in evaluation order, so creation order is a topological
// order and backward() simply walks the tape in reverse. Constants never
// receive an adjoint; reading grad() of a constant yields zeros.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dna/tensor.hpp"

namespace dna {

class Graph;

class Var {
public:
    Var() = default;

    bool valid() const noexcept { return graph_ != nullptr; }
    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    // Adjoint after Graph::backward(); zeros when no gradient reached this node.
    Tensor grad() const;

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, const Tensor& upstream)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    Var parameter(Tensor value);

    // Appends an op result. `backward` receives this node's adjoint and must
    // route it to the parents through accumulate(). Throws NumericError when
    // `value` is not finite.
    Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);

    // Seeds d(root)/d(root) = 1 and propagates. Root must hold one element.
    void backward(Var root);

    void accumulate(Var target, const Tensor& adjoint);
    // Mutable adjoint buffer for kernels that scatter directly; allocates zeros.
    // Returns nullptr when the target does not require a gradient.
    Tensor* adjoint_buffer(Var target);

    bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
    const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
    Tensor grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    // Number of node backward functions run by the last backward() call.
    std::size_t last_backward_visits() const noexcept { return visits_; }

private:
    struct Node {
        Tensor value;
        std::optional<Tensor> adjoint;
        BackwardFn backward;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
    std::size_t visits_ = 0;
};

namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
// x[N x M] + bias[M] broadcast over rows.
Var add_row_bias(Var x, Var bias);
Var relu(Var a);
// Throws NumericError on any non-positive input.
Var log(Var a);
Var l2_norm_squared(Var a);
Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);

// x [N x C x L], w [C' x C x k], optional bias [C'] (pass an invalid Var for none).
// Output [N x C' x L'] with L' = (L + 2*pad - k) / stride + 1.
Var conv1d(Var x, Var w, Var bias, std::size_t stride, std::size_t pad);
// [N x C x L] -> [N x C]
Var global_avg_pool(Var x);
// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

struct LeastSquaresTerms {
    Var ss_res;
    Var ss_total;
};
// OLS of zt [N x Q] on [zr, 1] with zr [N x P]. ss_res = ||(I - H) zt||^2 with H
// the hat matrix of the augmented regressor, ss_total = ||zt||^2.
LeastSquaresTerms least_squares_residual(Var zr, Var zt);

}  // namespace ad

Tensor conv1d_output(const Tensor& x, const Tensor& w, const Tensor* bias, std::size_t stride, std::size_t pad);
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t pad);

}  // namespace dna
