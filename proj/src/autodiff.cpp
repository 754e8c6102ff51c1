#include "dna/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dna/kernels.hpp"
#include "dna/linalg.hpp"

namespace dna {

const Tensor& Var::value() const { return graph_->value(*this); }
Tensor Var::grad() const { return graph_->grad(*this); }

Var Graph::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("non-finite constant of shape " + shape_string(value.shape()));
    nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor value) {
    if (!value.all_finite()) throw NumericError("non-finite parameter of shape " + shape_string(value.shape()));
    nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, true});
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
    if (!value.all_finite()) throw NumericError("op produced non-finite values, shape " + shape_string(value.shape()));
    bool needs = false;
    for (const Var& p : parents) {
        if (&p.graph() != this) throw std::logic_error("Var belongs to another graph");
        needs = needs || nodes_.at(p.id()).requires_grad;
    }
    nodes_.push_back(Node{std::move(value), std::nullopt, needs ? std::move(backward) : BackwardFn{}, needs});
    return Var(this, nodes_.size() - 1);
}

Tensor* Graph::adjoint_buffer(Var target) {
    Node& node = nodes_.at(target.id());
    if (!node.requires_grad) return nullptr;
    if (!node.adjoint) node.adjoint.emplace(node.value.shape());
    return &*node.adjoint;
}

void Graph::accumulate(Var target, const Tensor& adjoint) {
    Tensor* buf = adjoint_buffer(target);
    if (!buf) return;
    if (buf->shape() != adjoint.shape())
        throw ShapeError("adjoint shape " + shape_string(adjoint.shape()) + " does not match value shape " +
                         shape_string(buf->shape()));
    kernels::active().axpy(1.0, adjoint.ptr(), buf->ptr(), buf->size());
}

Tensor Graph::grad(Var v) const {
    const Node& node = nodes_.at(v.id());
    return node.adjoint ? *node.adjoint : Tensor(node.value.shape());
}

void Graph::backward(Var root) {
    Node& r = nodes_.at(root.id());
    if (r.value.size() != 1) throw ShapeError("backward root must be a scalar, got " + shape_string(r.value.shape()));
    for (auto& n : nodes_) n.adjoint.reset();
    visits_ = 0;
    if (!r.requires_grad) return;
    r.adjoint.emplace(r.value.shape(), 1.0);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.adjoint || !node.backward) continue;
        if (!node.adjoint->all_finite()) throw NumericError("non-finite adjoint at node " + std::to_string(i));
        const Tensor upstream = *node.adjoint;
        node.backward(*this, upstream);
        ++visits_;
    }
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0) throw ShapeError("conv1d stride must be >= 1");
    if (kernel == 0 || kernel > length + 2 * pad)
        throw ShapeError("conv1d kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(length + 2 * pad));
    return (length + 2 * pad - kernel) / stride + 1;
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

struct ConvGeometry {
    std::size_t n, c_in, length, c_out, kernel, stride, pad, out_len;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
    if (x.rank() != 3) throw ShapeError("conv1d input must be N x C x L, got " + shape_string(x.shape()));
    if (w.rank() != 3) throw ShapeError("conv1d weight must be C' x C x k, got " + shape_string(w.shape()));
    if (w.dim(1) != x.dim(1))
        throw ShapeError("conv1d channel mismatch: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(w.shape()));
    ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), stride, pad, 0};
    g.out_len = conv1d_output_length(g.length, g.kernel, stride, pad);
    return g;
}

// cols [(C*k) x L'] for sample n.
void im2col(const ConvGeometry& g, const double* x, double* cols) {
    for (std::size_t c = 0; c < g.c_in; ++c) {
        const double* xc = x + c * g.length;
        for (std::size_t j = 0; j < g.kernel; ++j) {
            double* row = cols + (c * g.kernel + j) * g.out_len;
            for (std::size_t t = 0; t < g.out_len; ++t) {
                const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
                row[t] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.length)) ? xc[pos] : 0.0;
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* dx) {
    for (std::size_t c = 0; c < g.c_in; ++c) {
        double* dxc = dx + c * g.length;
        for (std::size_t j = 0; j < g.kernel; ++j) {
            const double* row = cols + (c * g.kernel + j) * g.out_len;
            for (std::size_t t = 0; t < g.out_len; ++t) {
                const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
                if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.length)) dxc[pos] += row[t];
            }
        }
    }
}

}  // namespace

Tensor conv1d_output(const Tensor& x, const Tensor& w, const Tensor* bias, std::size_t stride, std::size_t pad) {
    const ConvGeometry g = conv_geometry(x, w, stride, pad);
    if (bias && (bias->rank() != 1 || bias->dim(0) != g.c_out)) throw ShapeError("conv1d bias must be [C']");
    Tensor out({g.n, g.c_out, g.out_len});
    const std::size_t ck = g.c_in * g.kernel;
    std::vector<double> cols(ck * g.out_len);
    for (std::size_t s = 0; s < g.n; ++s) {
        im2col(g, x.ptr() + s * g.c_in * g.length, cols.data());
        double* o = out.ptr() + s * g.c_out * g.out_len;
        if (bias)
            for (std::size_t oc = 0; oc < g.c_out; ++oc) std::fill_n(o + oc * g.out_len, g.out_len, (*bias)[oc]);
        kernels::gemm_nn(g.c_out, g.out_len, ck, w.ptr(), cols.data(), o);
    }
    return out;
}

namespace ad {

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out = linalg::matmul(av, bv);
    const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
    return a.graph().record(std::move(out), {a, b}, [a, b, n, k, m](Graph& g, const Tensor& up) {
        if (Tensor* ga = g.adjoint_buffer(a)) kernels::gemm_nt(n, k, m, up.ptr(), b.value().ptr(), ga->ptr());
        if (Tensor* gb = g.adjoint_buffer(b)) kernels::gemm_tn(k, m, n, a.value().ptr(), up.ptr(), gb->ptr());
    });
}

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    kernels::active().axpy(1.0, b.value().ptr(), out.ptr(), out.size());
    return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& up) {
        g.accumulate(a, up);
        g.accumulate(b, up);
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    kernels::active().axpy(-1.0, b.value().ptr(), out.ptr(), out.size());
    return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& up) {
        g.accumulate(a, up);
        if (Tensor* gb = g.adjoint_buffer(b)) kernels::active().axpy(-1.0, up.ptr(), gb->ptr(), gb->size());
    });
}

Var scale(Var a, double s) {
    Tensor out = a.value();
    for (double& v : out.data()) v *= s;
    return a.graph().record(std::move(out), {a}, [a, s](Graph& g, const Tensor& up) {
        if (Tensor* ga = g.adjoint_buffer(a)) kernels::active().axpy(s, up.ptr(), ga->ptr(), ga->size());
    });
}

Var add_row_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1))
        throw ShapeError("add_row_bias shape mismatch: " + shape_string(xv.shape()) + " + " + shape_string(bv.shape()));
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    Tensor out = xv;
    for (std::size_t i = 0; i < rows; ++i) kernels::active().axpy(1.0, bv.ptr(), out.ptr() + i * cols, cols);
    return x.graph().record(std::move(out), {x, bias}, [x, bias, rows, cols](Graph& g, const Tensor& up) {
        g.accumulate(x, up);
        if (Tensor* gb = g.adjoint_buffer(bias))
            for (std::size_t i = 0; i < rows; ++i) kernels::active().axpy(1.0, up.ptr() + i * cols, gb->ptr(), cols);
    });
}

Var relu(Var a) {
    Tensor out(a.shape());
    kernels::active().relu(a.value().ptr(), out.ptr(), out.size());
    return a.graph().record(std::move(out), {a}, [a](Graph& g, const Tensor& up) {
        if (Tensor* ga = g.adjoint_buffer(a))
            kernels::active().relu_backward(a.value().ptr(), up.ptr(), ga->ptr(), ga->size());
    });
}

Var log(Var a) {
    Tensor out(a.shape());
    const Tensor& av = a.value();
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (!(av[i] > 0.0)) throw NumericError("log of non-positive value " + std::to_string(av[i]));
        out[i] = std::log(av[i]);
    }
    return a.graph().record(std::move(out), {a}, [a](Graph& g, const Tensor& up) {
        if (Tensor* ga = g.adjoint_buffer(a)) {
            const Tensor& av = a.value();
            for (std::size_t i = 0; i < av.size(); ++i) (*ga)[i] += up[i] / av[i];
        }
    });
}

Var l2_norm_squared(Var a) {
    const Tensor& av = a.value();
    const double s = kernels::active().dot(av.ptr(), av.ptr(), av.size());
    return a.graph().record(Tensor::scalar(s), {a}, [a](Graph& g, const Tensor& up) {
        if (Tensor* ga = g.adjoint_buffer(a))
            kernels::active().axpy(2.0 * up.item(), a.value().ptr(), ga->ptr(), ga->size());
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.graph().record(Tensor::scalar(s), {a}, [a](Graph& g, const Tensor& up) {
        if (Tensor* ga = g.adjoint_buffer(a))
            for (double& v : ga->data()) v += up.item();
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return a.graph().record(std::move(out), {a}, [a](Graph& g, const Tensor& up) {
        if (Tensor* ga = g.adjoint_buffer(a)) kernels::active().axpy(1.0, up.ptr(), ga->ptr(), ga->size());
    });
}

Var conv1d(Var x, Var w, Var bias, std::size_t stride, std::size_t pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const ConvGeometry geo = conv_geometry(xv, wv, stride, pad);
    Tensor out = conv1d_output(xv, wv, bias.valid() ? &bias.value() : nullptr, stride, pad);
    Graph& graph = x.graph();
    auto backward = [x, w, bias, geo](Graph& g, const Tensor& up) {
        const std::size_t ck = geo.c_in * geo.kernel;
        Tensor* gx = g.adjoint_buffer(x);
        Tensor* gw = g.adjoint_buffer(w);
        Tensor* gb = bias.valid() ? g.adjoint_buffer(bias) : nullptr;
        std::vector<double> cols(ck * geo.out_len);
        std::vector<double> dcols(ck * geo.out_len);
        for (std::size_t s = 0; s < geo.n; ++s) {
            const double* dy = up.ptr() + s * geo.c_out * geo.out_len;
            if (gw) {
                im2col(geo, x.value().ptr() + s * geo.c_in * geo.length, cols.data());
                kernels::gemm_nt(geo.c_out, ck, geo.out_len, dy, cols.data(), gw->ptr());
            }
            if (gx) {
                std::fill(dcols.begin(), dcols.end(), 0.0);
                kernels::gemm_tn(ck, geo.out_len, geo.c_out, w.value().ptr(), dy, dcols.data());
                col2im_add(geo, dcols.data(), gx->ptr() + s * geo.c_in * geo.length);
            }
            if (gb)
                for (std::size_t oc = 0; oc < geo.c_out; ++oc) {
                    const double* row = dy + oc * geo.out_len;
                    double acc = 0.0;
                    for (std::size_t t = 0; t < geo.out_len; ++t) acc += row[t];
                    (*gb)[oc] += acc;
                }
        }
    };
    if (bias.valid()) return graph.record(std::move(out), {x, w, bias}, std::move(backward));
    return graph.record(std::move(out), {x, w}, std::move(backward));
}

Var global_avg_pool(Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3) throw ShapeError("global_avg_pool expects N x C x L");
    const std::size_t n = xv.dim(0), c = xv.dim(1), l = xv.dim(2);
    Tensor out({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
        double acc = 0.0;
        for (std::size_t t = 0; t < l; ++t) acc += xv[i * l + t];
        out[i] = acc / static_cast<double>(l);
    }
    return x.graph().record(std::move(out), {x}, [x, n, c, l](Graph& g, const Tensor& up) {
        if (Tensor* gx = g.adjoint_buffer(x)) {
            const double inv = 1.0 / static_cast<double>(l);
            for (std::size_t i = 0; i < n * c; ++i) {
                const double v = up[i] * inv;
                for (std::size_t t = 0; t < l; ++t) (*gx)[i * l + t] += v;
            }
        }
    });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    const Tensor& z = logits.value();
    if (z.rank() != 2) throw ShapeError("softmax_cross_entropy expects N x C logits");
    const std::size_t n = z.dim(0), c = z.dim(1);
    if (labels.size() != n) throw ShapeError("label count does not match batch size");
    Tensor probs({n, c});
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
        const double* row = z.ptr() + i * c;
        const double mx = *std::max_element(row, row + c);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        const double lse = mx + std::log(denom);
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
        loss += lse - row[y];
    }
    loss /= static_cast<double>(n);
    std::vector<int> ys(labels.begin(), labels.end());
    return logits.graph().record(Tensor::scalar(loss), {logits},
                                 [logits, probs = std::move(probs), ys = std::move(ys), n, c](Graph& g, const Tensor& up) {
                                     Tensor* gz = g.adjoint_buffer(logits);
                                     if (!gz) return;
                                     const double s = up.item() / static_cast<double>(n);
                                     for (std::size_t i = 0; i < n; ++i)
                                         for (std::size_t j = 0; j < c; ++j) {
                                             const double onehot = static_cast<int>(j) == ys[i] ? 1.0 : 0.0;
                                             (*gz)[i * c + j] += s * (probs[i * c + j] - onehot);
                                         }
                                 });
}

LeastSquaresTerms least_squares_residual(Var zr, Var zt) {
    const Tensor& rv = zr.value();
    const Tensor& tv = zt.value();
    linalg::LeastSquaresFit fit = linalg::least_squares_with_intercept(rv, tv);
    const std::size_t n = rv.dim(0), p = rv.dim(1), q = tv.dim(1);
    Graph& graph = zr.graph();
    Var ss_res = graph.record(
        Tensor::scalar(fit.ss_res), {zr, zt},
        [zr, zt, resid = std::move(fit.residual), coef = std::move(fit.coefficients), n, p, q](Graph& g,
                                                                                            const Tensor& up) {
            const double s = up.item();
            // d/dZt = 2 E ; d/dA = -2 E B^T (envelope theorem at the OLS optimum).
            if (Tensor* gt = g.adjoint_buffer(zt)) kernels::active().axpy(2.0 * s, resid.ptr(), gt->ptr(), gt->size());
            if (Tensor* gr = g.adjoint_buffer(zr)) {
                Tensor da({n, p + 1});
                kernels::gemm_nt(n, p + 1, q, resid.ptr(), coef.ptr(), da.ptr());
                for (std::size_t i = 0; i < n; ++i)
                    kernels::active().axpy(-2.0 * s, da.ptr() + i * (p + 1), gr->ptr() + i * p, p);
            }
        });
    return {ss_res, l2_norm_squared(zt)};
}

}  // namespace ad
}  // namespace dna
