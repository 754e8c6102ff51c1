#include "dna/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "binary_io.hpp"

namespace dna {

void ArchConfig::validate() const {
    if (conv_blocks.empty()) throw std::invalid_argument("architecture needs at least one conv block");
    if (feature_dim == 0 || num_classes < 2 || input_length == 0)
        throw std::invalid_argument("feature_dim, num_classes (>=2) and input_length must be positive");
    std::size_t len = input_length;
    for (const auto& b : conv_blocks) {
        if (b.out_channels == 0 || b.kernel == 0 || b.stride == 0)
            throw std::invalid_argument("conv block fields must be >= 1");
        len = conv1d_output_length(len, b.kernel, b.stride, b.kernel / 2);
    }
}

ClassifierParams init_params(const ArchConfig& arch, std::uint64_t seed) {
    arch.validate();
    std::mt19937_64 rng(seed);
    ClassifierParams p{arch, {}};
    const auto he = [&rng](Shape shape, std::size_t fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        Tensor t(std::move(shape));
        for (double& v : t.data()) v = dist(rng);
        return t;
    };
    std::size_t c_in = 1;
    for (const auto& b : arch.conv_blocks) {
        p.tensors.push_back(he({b.out_channels, c_in, b.kernel}, c_in * b.kernel));
        p.tensors.emplace_back(Shape{b.out_channels});
        c_in = b.out_channels;
    }
    p.tensors.push_back(he({c_in, arch.feature_dim}, c_in));
    p.tensors.emplace_back(Shape{arch.feature_dim});
    p.tensors.push_back(he({arch.feature_dim, arch.num_classes}, arch.feature_dim));
    p.tensors.emplace_back(Shape{arch.num_classes});
    return p;
}

std::vector<Var> bind_params(Graph& g, const ClassifierParams& params, bool trainable) {
    std::vector<Var> vars;
    vars.reserve(params.tensors.size());
    for (const auto& t : params.tensors) vars.push_back(trainable ? g.parameter(t) : g.constant(t));
    return vars;
}

ForwardVars forward(const ArchConfig& arch, std::span<const Var> params, Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.dim(1) != arch.input_length)
        throw ShapeError("classifier expects [N x " + std::to_string(arch.input_length) + "] input, got " +
                         shape_string(xv.shape()));
    const std::size_t expected = 2 * arch.conv_blocks.size() + 4;
    if (params.size() != expected) throw ShapeError("parameter count does not match architecture");

    Var h = ad::reshape(x, {xv.dim(0), 1, xv.dim(1)});
    std::size_t i = 0;
    for (const auto& b : arch.conv_blocks) {
        h = ad::relu(ad::conv1d(h, params[i], params[i + 1], b.stride, b.kernel / 2));
        i += 2;
    }
    h = ad::global_avg_pool(h);
    Var features = ad::relu(ad::add_row_bias(ad::matmul(h, params[i]), params[i + 1]));
    Var logits = ad::add_row_bias(ad::matmul(features, params[i + 2]), params[i + 3]);
    return {logits, features};
}

ForwardResult forward(const ClassifierParams& params, const Tensor& x, std::size_t chunk) {
    if (x.rank() != 2) throw ShapeError("forward expects [N x L]");
    const std::size_t n = x.dim(0);
    ForwardResult out{Tensor({n, params.arch.num_classes}), Tensor({n, params.arch.feature_dim})};
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        Graph g;
        const auto vars = bind_params(g, params, false);
        const auto fv = forward(params.arch, vars, g.constant(x.rows(begin, end)));
        std::copy_n(fv.logits.value().ptr(), fv.logits.value().size(), out.logits.ptr() + begin * params.arch.num_classes);
        std::copy_n(fv.features.value().ptr(), fv.features.value().size(),
                    out.features.ptr() + begin * params.arch.feature_dim);
    }
    return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("argmax_rows expects a matrix");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.ptr() + i * c;
        out[i] = static_cast<int>(std::max_element(row, row + c) - row);
    }
    return out;
}

std::vector<int> predict(const ClassifierParams& params, const Tensor& x) { return argmax_rows(forward(params, x).logits); }

namespace {
constexpr char kParamsMagic[9] = "DNAPARAM";
}

void save_params(const ClassifierParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(kParamsMagic, 8);
    binio::put_u32(out, kParamsFormatVersion);
    const auto& a = params.arch;
    binio::put_u64(out, a.conv_blocks.size());
    for (const auto& b : a.conv_blocks) {
        binio::put_u64(out, b.out_channels);
        binio::put_u64(out, b.kernel);
        binio::put_u64(out, b.stride);
    }
    binio::put_u64(out, a.feature_dim);
    binio::put_u64(out, a.num_classes);
    binio::put_u64(out, a.input_length);
    binio::put_u64(out, params.tensors.size());
    for (const auto& t : params.tensors) binio::put_tensor(out, t);
    if (!out) throw FormatError("write failed for " + path.string());
}

ClassifierParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    binio::expect_magic(in, kParamsMagic);
    const auto version = binio::get_u32(in, "version");
    if (version != kParamsFormatVersion)
        throw FormatError("params format version " + std::to_string(version) + " not supported (expected " +
                          std::to_string(kParamsFormatVersion) + ")");
    ClassifierParams p;
    const auto nblocks = binio::get_u64(in, "block count");
    if (nblocks > 64) throw FormatError("corrupt block count");
    p.arch.conv_blocks.resize(nblocks);
    for (auto& b : p.arch.conv_blocks) {
        b.out_channels = binio::get_u64(in, "block");
        b.kernel = binio::get_u64(in, "block");
        b.stride = binio::get_u64(in, "block");
    }
    p.arch.feature_dim = binio::get_u64(in, "feature_dim");
    p.arch.num_classes = binio::get_u64(in, "num_classes");
    p.arch.input_length = binio::get_u64(in, "input_length");
    const auto ntensors = binio::get_u64(in, "tensor count");
    if (ntensors != 2 * nblocks + 4) throw FormatError("tensor count does not match architecture");
    for (std::uint64_t i = 0; i < ntensors; ++i) p.tensors.push_back(binio::get_tensor(in));
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
    try {
        p.arch.validate();
    } catch (const std::exception& e) {
        throw FormatError(std::string("invalid architecture in params file: ") + e.what());
    }
    const ClassifierParams shapes = init_params(p.arch, 0);
    for (std::size_t i = 0; i < p.tensors.size(); ++i)
        if (p.tensors[i].shape() != shapes.tensors[i].shape()) throw FormatError("tensor shape mismatch in params file");
    return p;
}

}  // namespace dna
