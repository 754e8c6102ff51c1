#include "dna/decorrelation.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "binary_io.hpp"
#include "dna/linalg.hpp"

namespace dna {

void DecorConfig::validate(std::size_t feature_dim) const {
    if (r == 0 || r > feature_dim)
        throw std::invalid_argument("decor.r must satisfy 0 < r <= feature_dim (" + std::to_string(feature_dim) + ")");
    if (!(lambda >= 0.0)) throw std::invalid_argument("decor.lambda must be >= 0");
    if (!(eps > 0.0)) throw std::invalid_argument("decor.epsilon must be > 0");
}

double correlation_r2(const Tensor& zr, const Tensor& zt) {
    const auto fit = linalg::least_squares_with_intercept(zr, zt);
    const double total = linalg::frobenius_squared(zt);
    if (!(total > 0.0)) throw NumericError("correlation_r2: regressand has zero energy");
    return 1.0 - fit.ss_res / total;
}

Var decor_loss(Var zr, Var zt, double eps) {
    auto terms = ad::least_squares_residual(zr, zt);
    Graph& g = zr.graph();
    const Var e = g.constant(Tensor::scalar(eps));
    return ad::sub(ad::log(ad::add(terms.ss_total, e)), ad::log(ad::add(terms.ss_res, e)));
}

namespace {

Tensor projection_from(std::mt19937_64& rng, std::size_t d, std::size_t r) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    Tensor t({d, r});
    for (double& v : t.data()) v = dist(rng);
    return t;
}

}  // namespace

Tensor draw_projection(std::size_t d, std::size_t r, std::uint64_t seed) {
    if (r == 0 || r > d) throw std::invalid_argument("projection dimension must satisfy 0 < r <= D");
    std::mt19937_64 rng(seed);
    return projection_from(rng, d, r);
}

PairDraw draw_pair(std::size_t d, std::size_t r, std::uint64_t step_seed) {
    if (r == 0 || r > d) throw std::invalid_argument("projection dimension must satisfy 0 < r <= D");
    std::mt19937_64 rng(step_seed);
    PairDraw draw;
    draw.trainable_regresses = std::bernoulli_distribution(0.5)(rng);
    draw.projection = projection_from(rng, d, r);
    return draw;
}

Var pair_loss(Var zk, const Tensor& zi, const DecorConfig& cfg, std::uint64_t step_seed, const PairOverrides& overrides) {
    const Tensor& zkv = zk.value();
    if (zkv.shape() != zi.shape())
        throw ShapeError("pair_loss feature shapes differ: " + shape_string(zkv.shape()) + " vs " +
                         shape_string(zi.shape()));
    const std::size_t d = zkv.dim(1);
    PairDraw draw = draw_pair(d, cfg.r, step_seed);
    if (overrides.trainable_regresses) draw.trainable_regresses = *overrides.trainable_regresses;
    const Tensor& proj = overrides.projection ? *overrides.projection : draw.projection;
    if (proj.rank() != 2 || proj.dim(0) != d) throw ShapeError("projection must have D rows");

    Graph& g = zk.graph();
    const Var frozen = g.constant(zi);
    const Var r = g.constant(proj);
    if (draw.trainable_regresses) return decor_loss(zk, ad::matmul(frozen, r), cfg.eps);
    return decor_loss(frozen, ad::matmul(zk, r), cfg.eps);
}

Var ensemble_decor_loss(Var zk, std::span<const FeatureCache> caches, std::span<const std::size_t> batch_indices,
                        const DecorConfig& cfg, std::uint64_t step_seed) {
    if (caches.empty()) throw std::invalid_argument("ensemble_decor_loss needs at least one previous model");
    if (batch_indices.size() != zk.value().dim(0)) throw ShapeError("batch index count does not match feature rows");
    Var acc;
    for (const auto& cache : caches) {
        for (std::size_t i : batch_indices)
            if (i >= cache.features.dim(0))
                throw std::out_of_range("cache '" + cache.model_id + "' has no row " + std::to_string(i));
        const Tensor zi = gather_rows(cache.features, batch_indices);
        const Var term = pair_loss(zk, zi, cfg, step_seed);
        acc = acc.valid() ? ad::add(acc, term) : term;
    }
    return ad::scale(acc, 1.0 / static_cast<double>(caches.size()));
}

LossTerms total_loss(Var logits, std::span<const int> labels, Var zk, std::span<const FeatureCache> caches,
                     std::span<const std::size_t> batch_indices, const DecorConfig& cfg, std::uint64_t step_seed) {
    LossTerms terms;
    terms.ce = ad::softmax_cross_entropy(logits, labels);
    if (caches.empty()) {
        terms.total = terms.ce;
        return terms;
    }
    terms.cor = ensemble_decor_loss(zk, caches, batch_indices, cfg, step_seed);
    terms.total = ad::add(terms.ce, ad::scale(*terms.cor, cfg.lambda));
    return terms;
}

FeatureCache build_cache(const ClassifierParams& params, const Tensor& inputs, std::vector<std::string> sample_order,
                         std::string model_id) {
    if (sample_order.size() != inputs.dim(0)) throw ShapeError("sample order does not match input rows");
    return {std::move(model_id), std::move(sample_order), forward(params, inputs).features};
}

namespace {
constexpr char kCacheMagic[9] = "DNACACHE";
}

void save_cache(const FeatureCache& cache, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(kCacheMagic, 8);
    binio::put_u32(out, kCacheFormatVersion);
    binio::put_str(out, cache.model_id);
    binio::put_u64(out, cache.sample_order.size());
    for (const auto& id : cache.sample_order) binio::put_str(out, id);
    binio::put_tensor(out, cache.features);
    if (!out) throw FormatError("write failed for " + path.string());
}

FeatureCache load_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    binio::expect_magic(in, kCacheMagic);
    const auto version = binio::get_u32(in, "version");
    if (version != kCacheFormatVersion) throw FormatError("cache format version " + std::to_string(version) + " not supported");
    FeatureCache c;
    c.model_id = binio::get_str(in, "model id");
    const auto n = binio::get_u64(in, "sample count");
    if (n > (1ull << 32)) throw FormatError("corrupt sample count");
    c.sample_order.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) c.sample_order.push_back(binio::get_str(in, "sample id"));
    c.features = binio::get_tensor(in);
    if (c.features.rank() != 2 || c.features.dim(0) != n) throw FormatError("cache feature rows do not match sample order");
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
    return c;
}

}  // namespace dna
