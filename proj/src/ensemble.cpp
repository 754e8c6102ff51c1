#include "dna/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dna/linalg.hpp"
#include "dna/seeding.hpp"

namespace dna {

std::string_view to_string(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::Cor: return "cor";
        case EnsembleKind::Dec: return "dec";
        case EnsembleKind::Fcor: return "fcor";
        case EnsembleKind::Fdec: return "fdec";
    }
    return "?";
}

EnsembleKind parse_ensemble_kind(std::string_view s) {
    if (s == "cor") return EnsembleKind::Cor;
    if (s == "dec") return EnsembleKind::Dec;
    if (s == "fcor") return EnsembleKind::Fcor;
    if (s == "fdec") return EnsembleKind::Fdec;
    throw std::invalid_argument("unknown ensemble kind '" + std::string(s) + "' (expected cor|dec|fcor|fdec)");
}

std::array<ArmRole, kArms> arm_roles(EnsembleKind kind) {
    const bool filtered = kind == EnsembleKind::Fcor || kind == EnsembleKind::Fdec;
    const bool decor = kind == EnsembleKind::Dec || kind == EnsembleKind::Fdec;
    std::array<ArmRole, kArms> roles{};
    for (std::size_t k = 1; k < kArms; ++k) {
        if (filtered) roles[k].band = k - 1;
        roles[k].decorrelate = decor;
    }
    return roles;
}

Tensor arm_view(const ArmRole& role, const RingFilterBank& bank, const Tensor& x) {
    return role.band ? apply_band(bank, *role.band, x) : x;
}

void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state, const AdamConfig& cfg) {
    if (grads.size() != params.size()) throw ShapeError("adam: gradient count does not match parameters");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.shape());
            state.v.emplace_back(p.shape());
        }
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& g = grads[i];
        if (g.shape() != params[i].shape()) throw ShapeError("adam: gradient shape mismatch");
        if (!g.all_finite()) throw NumericError("adam: non-finite gradient in tensor " + std::to_string(i));
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        Tensor& p = params[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

void TrainConfig::validate(const ArchConfig& arch, bool decorrelation_active) const {
    if (epochs == 0) throw std::invalid_argument("train.epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("train.batch_size must be >= 1");
    if (!(adam.lr > 0.0)) throw std::invalid_argument("train.learning_rate must be > 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
        throw std::invalid_argument("adam betas must be in [0, 1)");
    if (!(adam.eps > 0.0)) throw std::invalid_argument("train.adam_epsilon must be > 0");
    if (decorrelation_active) {
        decor.validate(arch.feature_dim);
        if (batch_size <= decor.r + 1)
            throw std::invalid_argument("train.batch_size (" + std::to_string(batch_size) + ") must exceed decor.r + 1 (" +
                                        std::to_string(decor.r + 1) + ")");
        // The unprojected side of each regression has feature_dim columns plus an intercept.
        if (batch_size <= arch.feature_dim + 1)
            throw std::invalid_argument("train.batch_size (" + std::to_string(batch_size) +
                                        ") must exceed feature_dim + 1 (" + std::to_string(arch.feature_dim + 1) + ")");
    }
}

ArmResult train_arm(std::size_t k, EnsembleKind kind, const TrainingData& data, const ArchConfig& arch,
                    const TrainConfig& cfg, std::span<const FeatureCache> previous, const RingFilterBank& bank,
                    const ProgressFn& progress) {
    if (k >= kArms) throw std::out_of_range("arm index " + std::to_string(k));
    const ArmRole role = arm_roles(kind)[k];
    const bool decor_active = role.decorrelate && k > 0;
    cfg.validate(arch, decor_active);
    const std::size_t n = data.inputs.dim(0);
    if (data.labels.size() != n || data.ids.size() != n) throw ShapeError("training data columns disagree");
    if (n < cfg.batch_size) throw std::invalid_argument("training set smaller than one batch");
    std::span<const FeatureCache> caches;
    if (decor_active) {
        if (previous.size() < k) throw std::invalid_argument("arm " + std::to_string(k) + " needs caches of all earlier arms");
        caches = previous.first(k);
        for (const auto& c : caches)
            if (c.features.dim(0) != n) throw ShapeError("cache '" + c.model_id + "' does not cover the training set");
    }

    const Tensor view = arm_view(role, bank, data.inputs);
    ClassifierParams params = init_params(arch, derive_seed(cfg.init_seed, {k}));
    AdamState adam;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.shuffle_seed, {k}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batches = n / cfg.batch_size;  // incomplete tail batch dropped

    ArmResult result;
    std::uint64_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double ce_sum = 0.0, cor_sum = 0.0;
        std::size_t correct = 0, seen = 0;
        for (std::size_t b = 0; b < batches; ++b, ++step) {
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size),
                                         order.begin() + static_cast<std::ptrdiff_t>((b + 1) * cfg.batch_size));
            std::vector<int> y(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) y[i] = data.labels[idx[i]];

            Graph g;
            const auto vars = bind_params(g, params, true);
            const auto fv = forward(arch, vars, g.constant(gather_rows(view, idx)));
            const auto terms = total_loss(fv.logits, y, fv.features, caches, idx, cfg.decor,
                                          derive_seed(cfg.decor.seed, {k, step}));
            g.backward(terms.total);

            std::vector<Tensor> grads;
            grads.reserve(vars.size());
            for (const auto& v : vars) grads.push_back(v.grad());
            adam_step(params.tensors, grads, adam, cfg.adam);

            ce_sum += terms.ce.value().item();
            if (terms.cor) cor_sum += terms.cor->value().item();
            const auto pred = argmax_rows(fv.logits.value());
            for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
            seen += y.size();
        }
        CurveRow row;
        row.epoch = epoch;
        row.ce = ce_sum / static_cast<double>(batches);
        if (decor_active) row.cor = cor_sum / static_cast<double>(batches);
        row.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
        result.curve.push_back(row);
        if (progress) progress(k, row);
    }

    result.cache = build_cache(params, view, data.ids, "arm" + std::to_string(k));
    result.params = std::move(params);
    return result;
}

std::vector<ArmResult> train_ensemble(EnsembleKind kind, const TrainingData& data, const ArchConfig& arch,
                                      const TrainConfig& cfg, const RingFilterBank& bank, const ProgressFn& progress) {
    std::vector<ArmResult> arms;
    std::vector<FeatureCache> caches;
    for (std::size_t k = 0; k < kArms; ++k) {
        arms.push_back(train_arm(k, kind, data, arch, cfg, caches, bank, progress));
        caches.push_back(arms.back().cache);
    }
    return arms;
}

MetricsRow metrics_from_correctness(const std::vector<std::vector<bool>>& correct, const std::vector<bool>& mask) {
    if (correct.empty()) throw std::invalid_argument("no arms to evaluate");
    const std::size_t n = correct.front().size();
    for (const auto& c : correct)
        if (c.size() != n) throw ShapeError("arm correctness vectors differ in length");
    if (!mask.empty() && mask.size() != n) throw ShapeError("mask length does not match samples");
    const std::size_t arms = correct.size();
    MetricsRow row;
    std::size_t total_correct = 0;
    std::vector<std::size_t> at_least(arms + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.empty() && !mask[i]) continue;
        ++row.n;
        std::size_t c = 0;
        for (std::size_t a = 0; a < arms; ++a) c += correct[a][i];
        total_correct += c;
        for (std::size_t x = 1; x <= c; ++x) ++at_least[x];
    }
    if (row.n == 0) throw std::invalid_argument("evaluation mask selects no samples");
    const double nn = static_cast<double>(row.n);
    row.average = static_cast<double>(total_correct) / (nn * static_cast<double>(arms));
    row.p1 = static_cast<double>(at_least[1]) / nn;
    row.p2 = arms >= 2 ? static_cast<double>(at_least[2]) / nn : 0.0;
    row.p3 = arms >= 3 ? static_cast<double>(at_least[3]) / nn : 0.0;
    return row;
}

std::vector<std::vector<bool>> arm_correctness(std::span<const ClassifierParams> arms, EnsembleKind kind,
                                               const RingFilterBank& bank, const Tensor& x, std::span<const int> labels) {
    if (arms.size() != kArms) throw std::invalid_argument("expected three arms");
    const auto roles = arm_roles(kind);
    std::vector<std::vector<bool>> correct(kArms);
    for (std::size_t a = 0; a < kArms; ++a) {
        const auto pred = predict(arms[a], arm_view(roles[a], bank, x));
        correct[a].resize(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) correct[a][i] = pred[i] == labels[i];
    }
    return correct;
}

MetricsRow evaluate(std::span<const ClassifierParams> arms, EnsembleKind kind, const RingFilterBank& bank,
                    const Tensor& x, std::span<const int> labels, const std::vector<bool>& mask) {
    return metrics_from_correctness(arm_correctness(arms, kind, bank, x, labels), mask);
}

double CorrelationReport::clamped(std::size_t i, std::size_t j) const { return std::clamp(r2[i][j], 0.0, 1.0); }

double CorrelationReport::pair_mean(std::size_t i, std::size_t j) const { return 0.5 * (clamped(i, j) + clamped(j, i)); }

double CorrelationReport::mean_off_diagonal() const {
    double s = 0.0;
    for (std::size_t i = 0; i < kArms; ++i)
        for (std::size_t j = 0; j < kArms; ++j)
            if (i != j) s += clamped(i, j);
    return s / static_cast<double>(kArms * (kArms - 1));
}

CorrelationReport correlation_report(std::span<const FeatureCache> caches) {
    if (caches.size() != kArms) throw std::invalid_argument("correlation report needs three caches");
    CorrelationReport rep;
    for (std::size_t i = 0; i < kArms; ++i)
        for (std::size_t j = 0; j < kArms; ++j) {
            // An arm whose features are identically zero has nothing to explain;
            // report the limit of 1 - (SS_res + eps) / (SS_total + eps), which is 0.
            const bool dead = linalg::frobenius_squared(caches[j].features) == 0.0;
            rep.r2[i][j] = dead ? 0.0 : correlation_r2(caches[i].features, caches[j].features);
        }
    return rep;
}

CorrelationReport correlation_report(std::span<const ClassifierParams> arms, EnsembleKind kind,
                                     const RingFilterBank& bank, const Tensor& train_inputs) {
    if (arms.size() != kArms) throw std::invalid_argument("correlation report needs three arms");
    const auto roles = arm_roles(kind);
    std::vector<FeatureCache> caches;
    for (std::size_t a = 0; a < kArms; ++a)
        caches.push_back({"arm" + std::to_string(a), {}, forward(arms[a], arm_view(roles[a], bank, train_inputs)).features});
    return correlation_report(caches);
}

}  // namespace dna
