#include "dna/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dna/signal_io.hpp"

namespace dna {

std::string_view to_string(AttackFamily f) { return f == AttackFamily::Pgd ? "pgd" : "sap"; }

AttackFamily parse_attack_family(std::string_view s) {
    if (s == "pgd") return AttackFamily::Pgd;
    if (s == "sap") return AttackFamily::Sap;
    throw std::invalid_argument("unknown attack family '" + std::string(s) + "'");
}

void AttackSpec::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("attack epsilon must be >= 0");
    if (!(alpha >= 0.0)) throw std::invalid_argument("attack alpha must be >= 0");
    if (steps < 1) throw std::invalid_argument("attack steps must be >= 1");
    if (family == AttackFamily::Sap) {
        if (kernels.empty()) throw std::invalid_argument("SAP needs at least one smoothing kernel");
        for (const auto& k : kernels)
            if (k.width % 2 == 0 || !(k.sigma > 0.0)) throw std::invalid_argument("SAP kernels need odd width and sigma > 0");
    }
}

std::vector<SmoothingKernel> default_sap_kernels() {
    std::vector<SmoothingKernel> ks;
    for (std::size_t w : {5, 9, 13, 17, 21}) ks.push_back({w, static_cast<double>(w) / 4.0});
    return ks;
}

AttackSpec default_attack_spec(AttackFamily family, double epsilon) {
    AttackSpec s;
    s.family = family;
    s.epsilon = epsilon;
    s.alpha = epsilon / 10.0;
    s.steps = 20;
    if (family == AttackFamily::Sap) s.kernels = default_sap_kernels();
    return s;
}

std::vector<double> gaussian_kernel(std::size_t width, double sigma) {
    if (width == 0 || width % 2 == 0) throw std::invalid_argument("gaussian kernel width must be odd");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian kernel sigma must be > 0");
    std::vector<double> k(width);
    const double c = static_cast<double>(width - 1) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
        const double d = static_cast<double>(i) - c;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += k[i];
    }
    for (double& v : k) v /= total;
    return k;
}

namespace {

Var target_logits(Graph& g, const AttackTarget& target, Var x) {
    Var in = x;
    if (target.bank && target.band) in = ad::band_filter(x, *target.bank, *target.band);
    const auto vars = bind_params(g, *target.params, false);
    return forward(target.params->arch, vars, in).logits;
}

void require_batch(const AttackTarget& target, const Tensor& x, std::span<const int> labels) {
    if (!target.params) throw std::invalid_argument("attack target has no parameters");
    if (x.rank() != 2) throw ShapeError("attack input must be [N x L]");
    if (labels.size() != x.dim(0)) throw ShapeError("attack label count does not match batch");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Combined smoothing operator (1/M) sum_m K_m as one centred kernel [1 x 1 x W].
Tensor averaged_kernel(const std::vector<SmoothingKernel>& kernels) {
    std::size_t wmax = 0;
    for (const auto& k : kernels) wmax = std::max(wmax, k.width);
    Tensor w({1, 1, wmax});
    const double inv_m = 1.0 / static_cast<double>(kernels.size());
    for (const auto& k : kernels) {
        const auto g = gaussian_kernel(k.width, k.sigma);
        const std::size_t off = (wmax - k.width) / 2;
        for (std::size_t i = 0; i < k.width; ++i) w[off + i] += inv_m * g[i];
    }
    return w;
}

}  // namespace

Tensor pgd(const AttackTarget& target, const Tensor& x, std::span<const int> labels, const AttackSpec& spec) {
    if (spec.family != AttackFamily::Pgd) throw std::invalid_argument("pgd called with a non-PGD spec");
    spec.validate();
    require_batch(target, x, labels);
    Tensor adv = x;
    if (spec.epsilon == 0.0) return adv;
    for (std::size_t step = 0; step < spec.steps; ++step) {
        Graph g;
        const Var xv = g.parameter(adv);
        const Var loss = ad::softmax_cross_entropy(target_logits(g, target, xv), labels);
        g.backward(loss);
        const Tensor grad = xv.grad();
        for (std::size_t i = 0; i < adv.size(); ++i) {
            const double stepped = adv[i] + spec.alpha * sign(grad[i]);
            adv[i] = std::clamp(stepped, x[i] - spec.epsilon, x[i] + spec.epsilon);
        }
    }
    return adv;
}

Tensor sap(const AttackTarget& target, const Tensor& x, std::span<const int> labels, const AttackSpec& spec) {
    if (spec.family != AttackFamily::Sap) throw std::invalid_argument("sap called with a non-SAP spec");
    spec.validate();
    require_batch(target, x, labels);
    if (spec.epsilon == 0.0) return x;
    const std::size_t n = x.dim(0), l = x.dim(1);
    const Tensor kernel = averaged_kernel(spec.kernels);
    const std::size_t pad = kernel.dim(2) / 2;

    const auto render = [&](Graph& g, Var theta) {
        const Var smooth = ad::conv1d(ad::reshape(theta, {n, 1, l}), g.constant(kernel), Var{}, 1, pad);
        return ad::add(g.constant(x), ad::reshape(smooth, {n, l}));
    };

    Tensor theta({n, l});
    for (std::size_t step = 0; step < spec.steps; ++step) {
        Graph g;
        const Var tv = g.parameter(theta);
        const Var loss = ad::softmax_cross_entropy(target_logits(g, target, render(g, tv)), labels);
        g.backward(loss);
        const Tensor grad = tv.grad();
        for (std::size_t i = 0; i < theta.size(); ++i)
            theta[i] = std::clamp(theta[i] + spec.alpha * sign(grad[i]), -spec.epsilon, spec.epsilon);
    }
    Graph g;
    Tensor out = render(g, g.constant(theta)).value();
    // Unit-sum nonnegative smoothing keeps |x' - x| <= eps mathematically; clip
    // away the last-ulp excess from summation.
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], x[i] - spec.epsilon, x[i] + spec.epsilon);
    return out;
}

Tensor run_attack(const AttackTarget& target, const Tensor& x, std::span<const int> labels, const AttackSpec& spec,
                  std::size_t batch) {
    require_batch(target, x, labels);
    Tensor out(x.shape());
    const std::size_t n = x.dim(0), l = x.dim(1);
    for (std::size_t begin = 0; begin < n; begin += batch) {
        const std::size_t end = std::min(n, begin + batch);
        const Tensor xb = x.rows(begin, end);
        const auto yb = labels.subspan(begin, end - begin);
        const Tensor adv = spec.family == AttackFamily::Pgd ? pgd(target, xb, yb, spec) : sap(target, xb, yb, spec);
        std::copy_n(adv.ptr(), adv.size(), out.ptr() + begin * l);
    }
    return out;
}

std::vector<double> per_sample_loss(const AttackTarget& target, const Tensor& x, std::span<const int> labels) {
    require_batch(target, x, labels);
    Graph g;
    const Var logits = target_logits(g, target, g.constant(x));
    const Tensor& z = logits.value();
    const std::size_t c = z.dim(1);
    std::vector<double> out(x.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double* row = z.ptr() + i * c;
        const double mx = *std::max_element(row, row + c);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        out[i] = mx + std::log(denom) - row[labels[i]];
    }
    return out;
}

std::size_t AttackedSet::masked_count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }

AttackedSet craft_set(const AttackTarget& target, const ClassifierParams& base, std::span<const std::string> ids,
                      const Tensor& natural, std::span<const int> labels, const AttackSpec& spec,
                      std::string target_model_id) {
    if (ids.size() != natural.dim(0)) throw ShapeError("id count does not match samples");
    AttackedSet set;
    set.ids.assign(ids.begin(), ids.end());
    set.natural = natural;
    set.labels.assign(labels.begin(), labels.end());
    set.spec = spec;
    set.target_model_id = std::move(target_model_id);
    set.perturbed = run_attack(target, natural, labels, spec);
    const auto pred = predict(base, natural);
    const std::size_t n = natural.dim(0), l = natural.dim(1);
    set.mask.resize(n);
    set.linf.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        set.mask[i] = pred[i] == labels[i];
        double m = 0.0;
        for (std::size_t t = 0; t < l; ++t) m = std::max(m, std::abs(set.perturbed[i * l + t] - natural[i * l + t]));
        set.linf[i] = m;
    }
    return set;
}

void save_attacked_set(const AttackedSet& set, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "natural");
    std::filesystem::create_directories(dir / "perturbed");
    const std::size_t l = set.natural.dim(1);
    std::ofstream index(dir / "index.csv", std::ios::binary | std::ios::trunc);
    if (!index) throw DataError("cannot write index in " + dir.string());
    index << "record_id,label,masked,linf_delta\n";
    for (std::size_t i = 0; i < set.ids.size(); ++i) {
        write_signal(dir / "natural" / (set.ids[i] + ".txt"), std::span<const double>(set.natural.ptr() + i * l, l));
        write_signal(dir / "perturbed" / (set.ids[i] + ".txt"), std::span<const double>(set.perturbed.ptr() + i * l, l));
        index << set.ids[i] << ',' << set.labels[i] << ',' << (set.mask[i] ? 1 : 0) << ',' << format_double(set.linf[i])
              << '\n';
    }
}

AttackedSet load_attacked_set(const std::filesystem::path& dir) {
    std::ifstream index(dir / "index.csv");
    if (!index) throw DataError("missing attacked-set index " + (dir / "index.csv").string());
    std::string line;
    std::getline(index, line);
    if (line.rfind("record_id,label,masked,linf_delta", 0) != 0) throw DataError("unexpected index header in " + dir.string());
    AttackedSet set;
    std::vector<std::vector<double>> nat, pert;
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, label, masked, linf;
        std::getline(ss, id, ',');
        std::getline(ss, label, ',');
        std::getline(ss, masked, ',');
        std::getline(ss, linf, ',');
        set.ids.push_back(id);
        set.labels.push_back(std::stoi(label));
        set.mask.push_back(masked == "1");
        set.linf.push_back(parse_double(linf));
        nat.push_back(read_signal(dir / "natural" / (id + ".txt")));
        pert.push_back(read_signal(dir / "perturbed" / (id + ".txt")));
    }
    if (set.ids.empty()) throw DataError("attacked set in " + dir.string() + " is empty");
    const std::size_t l = nat.front().size();
    set.natural = Tensor({nat.size(), l});
    set.perturbed = Tensor({nat.size(), l});
    for (std::size_t i = 0; i < nat.size(); ++i) {
        if (nat[i].size() != l || pert[i].size() != l) throw DataError("ragged attacked-set signals in " + dir.string());
        std::copy(nat[i].begin(), nat[i].end(), set.natural.ptr() + i * l);
        std::copy(pert[i].begin(), pert[i].end(), set.perturbed.ptr() + i * l);
    }
    return set;
}

}  // namespace dna
