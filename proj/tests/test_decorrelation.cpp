#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dna/decorrelation.hpp"
#include "dna/linalg.hpp"
#include "dna/seeding.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dna;
using dna::testkit::random_tensor;

namespace {

Tensor centered(Tensor t) {
    for (std::size_t c = 0; c < t.dim(1); ++c) {
        double mean = 0;
        for (std::size_t i = 0; i < t.dim(0); ++i) mean += t.at(i, c) / t.dim(0);
        for (std::size_t i = 0; i < t.dim(0); ++i) t.at(i, c) -= mean;
    }
    return t;
}

double loss_value(const Tensor& zr, const Tensor& zt, double eps) {
    Graph g;
    return decor_loss(g.constant(zr), g.constant(zt), eps).value().item();
}

}  // namespace

TEST(CorrelationR2, ExactLinearRelationIsOne) {
    std::mt19937_64 rng(51);
    const Tensor zr = random_tensor({40, 6}, rng), w = random_tensor({6, 4}, rng);
    Tensor zt = linalg::matmul(zr, w);
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t c = 0; c < 4; ++c) zt.at(i, c) += 0.3 * c - 1;
    EXPECT_NEAR(correlation_r2(zr, zt), 1.0, 1e-10);
}

TEST(CorrelationR2, InterceptOnlyIsZero) {
    std::mt19937_64 rng(52);
    EXPECT_NEAR(correlation_r2(Tensor({30, 4}, 0.0), centered(random_tensor({30, 3}, rng))), 0.0, 1e-10);
}

TEST(CorrelationR2, MatchesNormalEquationsOracle) {
    std::mt19937_64 rng(53);
    const Tensor zr = random_tensor({80, 50}, rng), zt = random_tensor({80, 64}, rng);
    const auto oracle = dna::testkit::normal_equations(zr, zt);
    EXPECT_NEAR(correlation_r2(zr, zt), 1.0 - oracle.ss_res / oracle.ss_total, 1e-8);
    EXPECT_THROW(correlation_r2(Tensor({10, 9}), Tensor({10, 2})), ShapeError);
}

TEST(DecorLoss, PerfectFitValue) {
    // Zt is affine in Zr (SS_res = 0) and scaled to SS_total = 1.
    Tensor zr({10, 1}), zt({10, 1});
    for (std::size_t i = 0; i < 10; ++i) {
        zr[i] = double(i);
        zt[i] = 0.2 * zr[i] + 0.1;
    }
    const double norm = std::sqrt(linalg::frobenius_squared(zt));
    for (double& v : zt.data()) v /= norm;
    EXPECT_NEAR(loss_value(zr, zt, 1e-5), 11.512935464920229, 1e-6);
}

TEST(DecorLoss, UncorrelatedConstructionIsNearZero) {
    std::mt19937_64 rng(54);
    EXPECT_NEAR(loss_value(Tensor({25, 3}, 0.0), centered(random_tensor({25, 2}, rng)), 1e-5), 0.0, 1e-9);
}

TEST(DecorLoss, IsNonNegativeUpToEpsilon) {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 30; ++trial) {
        const Tensor zr = random_tensor({30, 5}, rng), zt = random_tensor({30, 4}, rng, 0.01 + trial);
        EXPECT_GE(loss_value(zr, zt, 1e-5), -1e-9);
    }
}

TEST(DecorLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(56);
    const double err = testkit::gradient_check(
        [](Graph&, const std::vector<Var>& v) { return decor_loss(v[0], v[1], 1e-5); },
        {random_tensor({20, 3}, rng), random_tensor({20, 2}, rng)});
    EXPECT_LT(err, 1e-5);
}

TEST(DecorLoss, RemovingExplainedComponentLowersLoss) {
    // Property: moving Zt toward its residual (orthogonal to [Zr, 1]) lowers the loss.
    std::mt19937_64 rng(57);
    const Tensor zr = random_tensor({40, 4}, rng), zt = random_tensor({40, 3}, rng);
    const auto fit = linalg::least_squares_with_intercept(zr, zt);
    double previous = loss_value(zr, zt, 1e-5);
    for (double t : {0.25, 0.5, 0.75, 1.0}) {
        Tensor moved = zt;
        for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = (1 - t) * zt[i] + t * fit.residual[i];
        const double value = loss_value(zr, moved, 1e-5);
        EXPECT_LT(value, previous);
        previous = value;
    }
    EXPECT_NEAR(previous, 0.0, 1e-9);
}

TEST(Projection, ShapeScaleAndSeeding) {
    EXPECT_EQ(draw_projection(64, 50, 1).shape(), (Shape{64, 50}));
    EXPECT_NE(draw_projection(64, 50, 1), draw_projection(64, 50, 2));
    EXPECT_EQ(draw_projection(64, 50, 3), draw_projection(64, 50, 3));
    double sq = 0, n = 0;
    for (std::uint64_t s = 0; s < 313; ++s) {  // ~1e6 entries
        for (double v : draw_projection(64, 50, s).data()) {
            sq += v * v;
            n += 1;
        }
    }
    EXPECT_NEAR(std::sqrt(sq / n), 1.0 / 8.0, 0.01 / 8.0);
    EXPECT_THROW(draw_projection(10, 11, 1), std::invalid_argument);
}

TEST(PairLoss, BranchFrequencyIsFair) {
    int trainable = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) trainable += draw_pair(8, 4, derive_seed(s, {})).trainable_regresses;
    EXPECT_NEAR(trainable / 10000.0, 0.5, 0.02);
}

TEST(PairLoss, FrozenTwinMatchesSelfRegressionInBothBranches) {
    std::mt19937_64 rng(58);
    const Tensor z = random_tensor({80, 64}, rng);
    DecorConfig cfg;
    for (bool branch : {true, false}) {
        Graph g;
        PairOverrides ov;
        ov.trainable_regresses = branch;
        const double value = pair_loss(g.constant(z), z, cfg, 7, ov).value().item();
        const Tensor proj = draw_pair(64, 50, 7).projection;
        const double direct = loss_value(z, linalg::matmul(z, proj), cfg.eps);
        EXPECT_NEAR(value, direct, 1e-6);
    }
}

TEST(PairLoss, IdentityProjectionReducesToDecorLoss) {
    std::mt19937_64 rng(59);
    const Tensor zk = random_tensor({30, 6}, rng), zi = random_tensor({30, 6}, rng);
    DecorConfig cfg;
    cfg.r = 6;
    Tensor identity({6, 6}, 0.0);
    for (std::size_t i = 0; i < 6; ++i) identity.at(i, i) = 1.0;
    for (bool branch : {true, false}) {
        Graph g;
        PairOverrides ov{branch, &identity};
        const double value = pair_loss(g.constant(zk), zi, cfg, 1, ov).value().item();
        const double direct = branch ? loss_value(zk, zi, cfg.eps) : loss_value(zi, zk, cfg.eps);
        EXPECT_EQ(value, direct);
    }
}

TEST(PairLoss, FrozenSideGetsNoGradientAndTrainableSideMatchesFiniteDifferences) {
    std::mt19937_64 rng(60);
    const Tensor zk = random_tensor({20, 5}, rng), zi = random_tensor({20, 5}, rng);
    DecorConfig cfg;
    cfg.r = 3;
    for (bool branch : {true, false}) {
        PairOverrides ov;
        ov.trainable_regresses = branch;
        const double err = testkit::gradient_check(
            [&](Graph&, const std::vector<Var>& v) { return pair_loss(v[0], zi, cfg, 11, ov); }, {zk});
        EXPECT_LT(err, 1e-5);
    }
}

TEST(PairLoss, SwappingValueSetsKeepsBothBranchTotal) {
    // With gradients ignored, the sum over both branches is symmetric in (Zk, Zi).
    std::mt19937_64 rng(61);
    const Tensor a = random_tensor({40, 8}, rng), b = random_tensor({40, 8}, rng);
    DecorConfig cfg;
    cfg.r = 5;
    auto both = [&](const Tensor& k, const Tensor& i) {
        double total = 0;
        for (bool branch : {true, false}) {
            Graph g;
            PairOverrides ov;
            ov.trainable_regresses = branch;
            total += pair_loss(g.constant(k), i, cfg, 3, ov).value().item();
        }
        return total;
    };
    EXPECT_NEAR(both(a, b), both(b, a), 1e-10);
}

TEST(EnsembleDecorLoss, IsArithmeticMeanOfPairs) {
    std::mt19937_64 rng(62);
    DecorConfig cfg;
    cfg.r = 4;
    const std::size_t n_train = 50, d = 6;
    std::vector<FeatureCache> caches(2);
    for (auto& c : caches) c.features = random_tensor({n_train, d}, rng);
    const std::vector<std::size_t> batch{3, 9, 12, 1, 40, 41, 7, 8, 20, 22, 30, 33, 45, 2};
    const Tensor zk = random_tensor({batch.size(), d}, rng);
    Graph g;
    Var zv = g.constant(zk);
    const double mean2 = ensemble_decor_loss(zv, caches, batch, cfg, 5).value().item();
    double expected = 0;
    for (const auto& c : caches) expected += pair_loss(zv, gather_rows(c.features, batch), cfg, 5).value().item() / 2;
    EXPECT_NEAR(mean2, expected, 1e-12);

    const std::span<const FeatureCache> one(caches.data(), 1);
    EXPECT_EQ(ensemble_decor_loss(zv, one, batch, cfg, 5).value().item(),
              pair_loss(zv, gather_rows(caches[0].features, batch), cfg, 5).value().item());

    std::vector<FeatureCache> twins{caches[0], caches[0]};
    EXPECT_NEAR(ensemble_decor_loss(zv, twins, batch, cfg, 5).value().item(),
                pair_loss(zv, gather_rows(caches[0].features, batch), cfg, 5).value().item(), 1e-12);

    const std::vector<std::size_t> out_of_range{1, 2, 60};
    EXPECT_THROW(ensemble_decor_loss(g.constant(random_tensor({3, d}, rng)), caches, out_of_range, cfg, 5), std::exception);
}

TEST(TotalLoss, CombinesCrossEntropyAndDecorrelation) {
    std::mt19937_64 rng(63);
    DecorConfig cfg;
    cfg.r = 4;
    const std::size_t n = 12, d = 6;
    std::vector<FeatureCache> caches(1);
    caches[0].features = random_tensor({n, d}, rng);
    std::vector<std::size_t> batch(n);
    for (std::size_t i = 0; i < n; ++i) batch[i] = i;
    const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
    const Tensor logits = random_tensor({n, 3}, rng), zk = random_tensor({n, d}, rng);

    {
        cfg.lambda = 0.0;
        Graph g;
        const auto terms = total_loss(g.constant(logits), labels, g.constant(zk), caches, batch, cfg, 1);
        EXPECT_EQ(terms.total.value().item(), ad::softmax_cross_entropy(g.constant(logits), labels).value().item());
    }
    cfg.lambda = 0.2;
    Graph g;
    Var lv = g.parameter(logits), zv = g.parameter(zk);
    const auto terms = total_loss(lv, labels, zv, caches, batch, cfg, 1);
    ASSERT_TRUE(terms.cor.has_value());
    EXPECT_NEAR(terms.total.value().item(), terms.ce.value().item() + 0.2 * terms.cor->value().item(), 1e-14);
    g.backward(terms.total);
    const Tensor gz_total = zv.grad();

    Graph g2;
    Var zv2 = g2.parameter(zk);
    g2.backward(ad::scale(ensemble_decor_loss(zv2, caches, batch, cfg, 1), 0.2));
    EXPECT_LT(max_abs_diff(gz_total, zv2.grad()), 1e-12);

    // Without caches the total is plain cross-entropy.
    Graph g3;
    const auto plain = total_loss(g3.constant(logits), labels, g3.constant(zk), {}, batch, cfg, 1);
    EXPECT_FALSE(plain.cor.has_value());
    EXPECT_EQ(plain.total.id(), plain.ce.id());
}

TEST(DecorConfig, Validation) {
    DecorConfig cfg;
    EXPECT_NO_THROW(cfg.validate(64));
    EXPECT_THROW(cfg.validate(40), std::invalid_argument);
    cfg.lambda = -1;
    EXPECT_THROW(cfg.validate(64), std::invalid_argument);
    cfg = DecorConfig{};
    cfg.eps = 0;
    EXPECT_THROW(cfg.validate(64), std::invalid_argument);
    cfg = DecorConfig{};
    cfg.r = 0;
    EXPECT_THROW(cfg.validate(64), std::invalid_argument);
}

TEST(FeatureCacheFile, BuildMatchesForwardAndRoundTrips) {
    ArchConfig arch;
    arch.conv_blocks = {{4, 5, 2}};
    arch.feature_dim = 8;
    arch.input_length = 32;
    const auto params = init_params(arch, 1);
    std::mt19937_64 rng(64);
    const Tensor x = random_tensor({10, 32}, rng);
    std::vector<std::string> order;
    for (int i = 0; i < 10; ++i) order.push_back("s" + std::to_string(i));
    const auto cache = build_cache(params, x, order, "arm0");
    EXPECT_EQ(cache.features, forward(params, x).features);
    EXPECT_EQ(build_cache(params, x, order, "arm0"), cache);
    const auto path = std::filesystem::temp_directory_path() / "dna_cache_roundtrip.bin";
    save_cache(cache, path);
    EXPECT_EQ(load_cache(path), cache);
}

TEST(FeatureCacheFile, CachedLossEqualsLiveRecomputation) {
    ArchConfig arch;
    arch.conv_blocks = {{4, 5, 2}};
    arch.feature_dim = 8;
    arch.input_length = 32;
    const auto frozen = init_params(arch, 2), active = init_params(arch, 3);
    std::mt19937_64 rng(65);
    const Tensor x = random_tensor({30, 32}, rng);
    const auto cache = build_cache(frozen, x, std::vector<std::string>(30, "id"), "arm0");
    const std::vector<std::size_t> batch{4, 8, 15, 16, 23, 29, 0, 1, 2, 3, 5, 6};
    DecorConfig cfg;
    cfg.r = 5;
    Graph g;
    Var zk = g.constant(forward(active, gather_rows(x, batch)).features);
    const double cached = ensemble_decor_loss(zk, std::span<const FeatureCache>(&cache, 1), batch, cfg, 9).value().item();
    const double live = pair_loss(zk, forward(frozen, gather_rows(x, batch)).features, cfg, 9).value().item();
    EXPECT_EQ(cached, live);
}
