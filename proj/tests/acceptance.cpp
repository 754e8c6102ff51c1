// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
// The desk-scale pipeline runs through the CLI binary in a scratch directory;
// criteria 3-7 read its artifacts. Set DNA_ACCEPTANCE_DIR to choose the
// scratch directory.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "dna/attacks.hpp"
#include "dna/config.hpp"
#include "dna/fft.hpp"
#include "dna/fourier.hpp"
#include "dna/linalg.hpp"
#include "dna/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace dna;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    std::vector<std::string> failures;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            failures.push_back(what);
        }
    }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = "\"" DNA_CLI_PATH "\" " + args + " >>\"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

using testkit::gradient_check;
using testkit::probe;
using testkit::random_tensor;

// ---------------------------------------------------------------------------

Outcome numerical_core() {
    Outcome out;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    auto signed_away = [&](Shape s) {
        Tensor t = random_tensor(std::move(s), rng);
        for (double& v : t.data()) v += v >= 0 ? 0.2 : -0.2;
        return t;
    };
    const std::vector<int> labels{0, 2, 1, 2};
    std::map<std::string, double> errs;
    errs["matmul"] = gradient_check([](Graph& g, const std::vector<Var>& v) { return probe(g, ad::matmul(v[0], v[1])); },
                                    {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)});
    errs["add"] = gradient_check([](Graph& g, const std::vector<Var>& v) { return probe(g, ad::add(v[0], v[1])); },
                                 {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    errs["sub"] = gradient_check([](Graph& g, const std::vector<Var>& v) { return probe(g, ad::sub(v[0], v[1])); },
                                 {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    errs["scale"] = gradient_check([](Graph& g, const std::vector<Var>& v) { return probe(g, ad::scale(v[0], 0.7)); },
                                   {random_tensor({5}, rng)});
    errs["add_row_bias"] = gradient_check(
        [](Graph& g, const std::vector<Var>& v) { return probe(g, ad::add_row_bias(v[0], v[1])); },
        {random_tensor({4, 3}, rng), random_tensor({3}, rng)});
    errs["relu"] = gradient_check([](Graph& g, const std::vector<Var>& v) { return probe(g, ad::relu(v[0])); },
                                  {signed_away({4, 5})});
    errs["log"] = gradient_check([](Graph& g, const std::vector<Var>& v) { return probe(g, ad::log(v[0])); },
                                 {testkit::uniform_tensor({6}, rng, 0.5, 2.0)});
    errs["l2_norm_squared"] = gradient_check([](Graph&, const std::vector<Var>& v) { return ad::l2_norm_squared(v[0]); },
                                             {random_tensor({7}, rng)});
    errs["sum"] = gradient_check([](Graph&, const std::vector<Var>& v) { return ad::sum(v[0]); }, {random_tensor({7}, rng)});
    errs["mean"] = gradient_check([](Graph&, const std::vector<Var>& v) { return ad::mean(v[0]); }, {random_tensor({7}, rng)});
    errs["reshape"] = gradient_check([](Graph& g, const std::vector<Var>& v) { return probe(g, ad::reshape(v[0], {6, 2})); },
                                     {random_tensor({3, 4}, rng)});
    errs["conv1d"] = gradient_check(
        [](Graph& g, const std::vector<Var>& v) { return probe(g, ad::conv1d(v[0], v[1], v[2], 2, 2)); },
        {random_tensor({2, 2, 15}, rng), random_tensor({3, 2, 5}, rng), random_tensor({3}, rng)});
    errs["global_avg_pool"] = gradient_check(
        [](Graph& g, const std::vector<Var>& v) { return probe(g, ad::global_avg_pool(v[0])); }, {random_tensor({2, 3, 5}, rng)});
    errs["softmax_cross_entropy"] = gradient_check(
        [&](Graph&, const std::vector<Var>& v) { return ad::softmax_cross_entropy(v[0], labels); },
        {random_tensor({4, 3}, rng, 2.0)});
    const Tensor zr = random_tensor({20, 3}, rng), zt = random_tensor({20, 2}, rng);
    errs["least_squares.ss_res"] = gradient_check(
        [](Graph&, const std::vector<Var>& v) { return ad::least_squares_residual(v[0], v[1]).ss_res; }, {zr, zt});
    errs["least_squares.ss_total"] = gradient_check(
        [](Graph&, const std::vector<Var>& v) { return ad::least_squares_residual(v[0], v[1]).ss_total; }, {zr, zt});
    const RingFilterBank bank = design_bank(32, 0.2, 0.05);
    errs["band_filter"] = gradient_check(
        [&](Graph& g, const std::vector<Var>& v) { return probe(g, ad::band_filter(v[0], bank, 1)); },
        {random_tensor({2, 1, 30}, rng)});
    double worst_grad = 0;
    std::string worst_op;
    for (const auto& [op, e] : errs) {
        if (e > worst_grad) {
            worst_grad = e;
            worst_op = op;
        }
        out.require(e < 1e-5, "gradient " + op + " rel err " + fmt(e));
    }

    double worst_ls = 0;
    for (auto [n, p, q] : {std::tuple<std::size_t, std::size_t, std::size_t>{80, 50, 64}, {80, 64, 50}, {40, 5, 3}}) {
        const Tensor a = random_tensor({n, p}, rng), b = random_tensor({n, q}, rng);
        const auto oracle = testkit::normal_equations(a, b);
        Graph g;
        const auto terms = ad::least_squares_residual(g.constant(a), g.constant(b));
        worst_ls = std::max({worst_ls, std::abs(terms.ss_res.value().item() - oracle.ss_res) / oracle.ss_res,
                             std::abs(terms.ss_total.value().item() - oracle.ss_total) / oracle.ss_total});
    }
    out.require(worst_ls < 1e-8, "least squares vs normal equations rel err " + fmt(worst_ls));

    double worst_fft = 0;
    for (std::size_t n : {1, 7, 64, 100, 512, 1024}) {
        std::vector<double> x(n);
        std::normal_distribution<double> d;
        for (auto& v : x) v = d(rng);
        const auto back = fft::inverse_real(fft::forward(x));
        for (std::size_t i = 0; i < n; ++i) worst_fft = std::max(worst_fft, std::abs(back[i] - x[i]));
    }
    out.require(worst_fft < 1e-10, "fft roundtrip err " + fmt(worst_fft));
    const double secs = seconds_since(t0);
    out.require(secs < 60, "runtime " + fmt(secs) + " s");
    out.detail << "max gradient rel err " << fmt(worst_grad) << " (" << worst_op << "), least-squares rel err "
               << fmt(worst_ls) << ", fft roundtrip " << fmt(worst_fft) << ", " << fmt(secs, 3) << " s";
    return out;
}

Outcome filter_bank() {
    Outcome out;
    const auto t0 = Clock::now();
    bool unity = true;
    for (double tw : {0.0, 0.05})
        for (std::size_t len : {8, 512, 1024}) {
            const auto bank = design_bank(len, 0.2, tw);
            for (std::size_t k = 0; k < len; ++k) unity = unity && bank.responses[0][k] + bank.responses[1][k] == 1.0;
        }
    out.require(unity, "partition of unity");

    std::mt19937_64 rng(202);
    std::normal_distribution<double> d;
    const auto bank = design_bank(512, 0.2, 0.05);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(512);
        for (auto& v : x) v = d(rng);
        const auto lo = apply_band(bank, 0, x), hi = apply_band(bank, 1, x);
        double diff = 0, norm = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            diff += std::pow(lo[i] + hi[i] - x[i], 2);
            norm += x[i] * x[i];
        }
        worst = std::max(worst, std::sqrt(diff / norm));
    }
    out.require(worst < 1e-9, "reconstruction rel err " + fmt(worst));

    double grad_err = 0;
    const auto small = design_bank(64, 0.2, 0.05);
    for (std::size_t band : {0, 1})
        grad_err = std::max(grad_err, gradient_check([&](Graph& g, const std::vector<Var>& v) {
                                return probe(g, ad::band_filter(v[0], small, band));
                            },
                                                     {random_tensor({2, 1, 50}, rng)}));
    out.require(grad_err < 1e-5, "self-adjoint gradient rel err " + fmt(grad_err));
    const double secs = seconds_since(t0);
    out.require(secs < 10, "runtime " + fmt(secs) + " s");
    out.detail << "partition exact: " << (unity ? "yes" : "no") << ", reconstruction rel err " << fmt(worst)
               << ", gradient rel err " << fmt(grad_err) << ", " << fmt(secs, 3) << " s";
    return out;
}

// ---------------------------------------------------------------------------

struct DeskRun {
    bool ok = false;
    std::string error;
    RunConfig cfg;
    fs::path root;
    double pipeline_seconds = 0;
    double attack_seconds = 0;
};

DeskRun run_desk_pipeline(const fs::path& root) {
    DeskRun run;
    run.root = root;
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path log = root / "pipeline.log";
    json j = json::parse(read_file(DNA_DESK_CONFIG));
    j["output"]["root"] = root.string();
    std::ofstream(root / "config.json") << j.dump(2) << "\n";
    run.cfg = parse_config(j);
    const std::string cfg = "--config \"" + (root / "config.json").string() + "\"";
    const auto t0 = Clock::now();
    if (run_cli("generate-data " + cfg, log) != 0) {
        run.error = "generate-data failed";
        return run;
    }
    for (const char* kind : {"cor", "dec", "fcor", "fdec"})
        if (run_cli("train " + cfg + " --kind " + kind + " --out ensembles", log) != 0) {
            run.error = std::string("train ") + kind + " failed";
            return run;
        }
    const auto attack_start = Clock::now();
    if (run_cli("attack " + cfg + " --ensemble-dir ensembles --out attacks", log) != 0) {
        run.error = "attack failed";
        return run;
    }
    run.attack_seconds = seconds_since(attack_start);
    if (run_cli("evaluate " + cfg + " --ensemble-dir ensembles --attacks attacks --out report.csv", log) != 0) {
        run.error = "evaluate failed";
        return run;
    }
    run.pipeline_seconds = seconds_since(t0);
    run.ok = true;
    return run;
}

struct ReportRow {
    std::string kind, attack;
    double epsilon = 0, average = 0, p1 = 0, p2 = 0, p3 = 0;
    std::size_t n = 0;
};

std::vector<ReportRow> read_report(const fs::path& path) {
    std::vector<ReportRow> rows;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string f[8];
        for (auto& s : f) std::getline(ss, s, ',');
        rows.push_back({f[0], f[1], parse_double(f[2]), parse_double(f[3]), parse_double(f[4]), parse_double(f[5]),
                        parse_double(f[6]), std::stoul(f[7])});
    }
    return rows;
}

Outcome attack_contract(const DeskRun& run) {
    Outcome out;
    if (!run.ok) {
        out.require(false, run.error);
        return out;
    }
    const auto t0 = Clock::now();
    const fs::path attacks = run.root / "attacks";
    const RingFilterBank bank = make_bank(run.cfg);
    double worst_excess = -1e300;
    double min_smooth_fraction = 1.0;
    for (double eps : run.cfg.attack.epsilons) {
        const AttackedSet pgd_set = load_attacked_set(attack_cell_dir(attacks, AttackFamily::Pgd, eps));
        const AttackedSet sap_set = load_attacked_set(attack_cell_dir(attacks, AttackFamily::Sap, eps));
        const std::size_t n = pgd_set.natural.dim(0), l = pgd_set.natural.dim(1);
        std::size_t smoother = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> dp(l), ds(l);
            for (std::size_t j = 0; j < l; ++j) {
                dp[j] = pgd_set.perturbed[i * l + j] - pgd_set.natural[i * l + j];
                ds[j] = sap_set.perturbed[i * l + j] - sap_set.natural[i * l + j];
                worst_excess = std::max({worst_excess, std::abs(dp[j]) - eps, std::abs(ds[j]) - eps});
            }
            const auto ep = band_energy(dp, bank), es = band_energy(ds, bank);
            const double fp = ep[1] / (ep[0] + ep[1]), fsap = es[1] / (es[0] + es[1]);
            smoother += fsap < fp;
        }
        const double fraction = double(smoother) / n;
        min_smooth_fraction = std::min(min_smooth_fraction, fraction);
        out.require(fraction >= 0.9, "eps " + fmt(eps) + ": SAP smoother on " + fmt(100 * fraction) + "% of samples");
    }
    // Floating-point evaluation of x + eps can exceed eps by rounding of the sum.
    out.require(worst_excess <= 1e-12, "linf excess " + fmt(worst_excess));

    // Zero budget is the identity (checked on the desk base model directly).
    const PreparedData data = load_prepared(run.cfg);
    const ClassifierParams base = load_params(run.root / "ensembles" / "cor" / "arm0.params");
    const Tensor x = signals_tensor(data.test);
    const auto y = labels_of(data.test);
    const AttackTarget target{&base, nullptr, std::nullopt};
    bool identity = true;
    for (auto family : {AttackFamily::Pgd, AttackFamily::Sap})
        identity = identity && run_attack(target, x, y, run.cfg.attack.spec(family, 0.0)) == x;
    out.require(identity, "eps=0 identity");
    const double secs = seconds_since(t0);
    out.detail << "max (|delta| - eps) " << fmt(worst_excess) << ", eps=0 identity " << (identity ? "yes" : "no")
               << ", min fraction of samples where SAP high-band share < PGD's " << fmt(100 * min_smooth_fraction)
               << "%, check " << fmt(secs, 3) << " s, crafting the full grid " << fmt(run.attack_seconds, 3) << " s";
    return out;
}

Outcome decorrelation_trend(const DeskRun& run) {
    Outcome out;
    if (!run.ok) {
        out.require(false, run.error);
        return out;
    }
    const json corr = json::parse(read_file(run.root / "report.correlation.json"));
    const double cor = corr["cor"]["mean_off_diagonal"].get<double>();
    const double dec = corr["dec"]["mean_off_diagonal"].get<double>();
    out.require(cor - dec >= 0.15, "gap " + fmt(cor - dec));
    out.detail << "mean off-diagonal R^2 cor " << fmt(cor) << ", dec " << fmt(dec) << ", gap " << fmt(cor - dec)
               << " (need >= 0.15)";
    return out;
}

Outcome robustness_trend(const DeskRun& run) {
    Outcome out;
    if (!run.ok) {
        out.require(false, run.error);
        return out;
    }
    const auto rows = read_report(run.root / "report.csv");
    double eps_max = 0;
    for (double e : run.cfg.attack.epsilons) eps_max = std::max(eps_max, e);
    bool ordered = true;
    for (const auto& r : rows) ordered = ordered && r.p1 >= r.p2 && r.p2 >= r.p3;
    out.require(ordered, "P(>=1) >= P(>=2) >= P(3) on every row");
    for (const char* family : {"pgd", "sap"}) {
        double fdec = -1, cor = -1;
        for (const auto& r : rows)
            if (r.attack == family && r.epsilon == eps_max) {
                if (r.kind == "fdec") fdec = r.p1;
                if (r.kind == "cor") cor = r.p1;
            }
        out.require(fdec - cor >= 0.10, std::string(family) + " gap " + fmt(fdec - cor));
        out.detail << family << " eps " << fmt(eps_max) << ": P(>=1) fdec " << fmt(fdec) << " vs cor " << fmt(cor) << "; ";
    }
    out.detail << "ordering holds on all " << rows.size() << " rows: " << (ordered ? "yes" : "no")
               << "; pipeline wall time " << fmt(run.pipeline_seconds / 60, 3) << " min (1 core)";
    return out;
}

Outcome natural_accuracy(const DeskRun& run) {
    Outcome out;
    if (!run.ok) {
        out.require(false, run.error);
        return out;
    }
    std::map<std::string, double> acc;
    for (const auto& r : read_report(run.root / "report.csv"))
        if (r.attack == "none") acc[r.kind] = r.average;
    for (const auto& [kind, a] : acc) {
        out.require(a >= 0.80, kind + " natural accuracy " + fmt(a));
        if (kind != "cor") out.require(acc["cor"] >= a - 0.01, "cor below " + kind);
        out.detail << (kind == acc.begin()->first ? "" : ", ") << kind << " " << fmt(100 * a) << "%";
    }
    return out;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "cli.log")
            files[fs::relative(e.path(), dir).string()] = read_file(e.path());
    return files;
}

Outcome reduction_and_determinism(const fs::path& scratch) {
    Outcome out;
    const fs::path root = scratch / "determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path log = root / "cli.log";
    // Reduced configuration: same pipeline, fewer records and epochs.
    json j = json::parse(read_file(DNA_DESK_CONFIG));
    j["data"]["records_per_class"] = 40;
    j["train"]["epochs"] = 4;
    j["attack"]["epsilons"] = {0.0, 0.5};
    j["output"]["root"] = root.string();
    std::ofstream(root / "config.json") << j.dump(2) << "\n";
    json zero = j;
    zero["decor"]["lambda"] = 0.0;
    zero["data"]["dir"] = "data";
    std::ofstream(root / "config_lambda0.json") << zero.dump(2) << "\n";
    const std::string cfg = "--config \"" + (root / "config.json").string() + "\"";

    auto pipeline = [&](bool force) {
        const std::string f = force ? " --force" : "";
        bool ok = run_cli("generate-data " + cfg, log) == 0;
        for (const char* kind : {"cor", "dec", "fcor", "fdec"})
            ok = ok && run_cli("train " + cfg + " --kind " + kind + " --out ensembles" + f, log) == 0;
        ok = ok && run_cli("attack " + cfg + " --ensemble-dir ensembles --out attacks", log) == 0;
        ok = ok && run_cli("evaluate " + cfg + " --ensemble-dir ensembles --attacks attacks --out report.csv", log) == 0;
        return ok;
    };
    const bool first_ok = pipeline(false);
    out.require(first_ok, "first pipeline run");
    const auto first = snapshot(root);
    const bool second_ok = pipeline(true);
    out.require(second_ok, "second pipeline run");
    const auto second = snapshot(root);
    std::size_t differing = 0;
    for (const auto& [name, bytes] : first) {
        const auto it = second.find(name);
        if (it == second.end() || it->second != bytes) {
            ++differing;
            out.require(false, "re-run changed " + name);
        }
    }
    out.require(first.size() == second.size(), "file set changed on re-run");

    // dec with lambda = 0 against cor, trained independently from scratch.
    const std::string cfg0 = "--config \"" + (root / "config_lambda0.json").string() + "\"";
    const bool dec0_ok = run_cli("train " + cfg0 + " --kind dec --out lambda0", log) == 0;
    out.require(dec0_ok, "lambda=0 training");
    std::size_t identical_arms = 0;
    for (int k = 0; k < 3; ++k) {
        const std::string arm = "arm" + std::to_string(k);
        const bool same = read_file(root / "lambda0" / "dec" / (arm + ".params")) ==
                              read_file(root / "ensembles" / "cor" / (arm + ".params")) &&
                          read_file(root / "lambda0" / "dec" / (arm + ".cache")) ==
                              read_file(root / "ensembles" / "cor" / (arm + ".cache"));
        identical_arms += same;
        out.require(same, "lambda=0 " + arm + " differs from cor");
    }
    out.detail << first.size() << " artifacts compared, " << differing << " differ on re-run; dec(lambda=0) matches cor on "
               << identical_arms << "/3 arms";
    return out;
}

}  // namespace

int main() {
    const fs::path scratch = [] {
        if (const char* env = std::getenv("DNA_ACCEPTANCE_DIR"); env && *env) return fs::path(env);
        return fs::temp_directory_path() / "dna_acceptance";
    }();
    unsetenv("DNA_OUTPUT_ROOT");

    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
    DeskRun desk;
    bool desk_started = false;
    auto desk_run = [&]() -> const DeskRun& {
        if (!desk_started) {
            desk_started = true;
            std::cout << "running desk pipeline in " << (scratch / "desk").string() << " ..." << std::endl;
            desk = run_desk_pipeline(scratch / "desk");
        }
        return desk;
    };
    criteria.emplace_back("numerical core", numerical_core);
    criteria.emplace_back("filter bank", filter_bank);
    criteria.emplace_back("attack contract", [&] { return attack_contract(desk_run()); });
    criteria.emplace_back("decorrelation trend", [&] { return decorrelation_trend(desk_run()); });
    criteria.emplace_back("robustness trend", [&] { return robustness_trend(desk_run()); });
    criteria.emplace_back("reduction and determinism", [&] { return reduction_and_determinism(scratch); });
    criteria.emplace_back("natural accuracy", [&] { return natural_accuracy(desk_run()); });

    int failures = 0;
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        failures += !o.pass;
        std::ostringstream line;
        line << "criterion " << (i + 1) << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
             << o.detail.str();
        for (const auto& f : o.failures) line << " [failed: " << f << "]";
        std::cout << line.str() << std::endl;
        lines.push_back(line.str());
    }
    std::cout << "\nsummary\n";
    for (const auto& l : lines) std::cout << l.substr(0, l.find(':')) << "\n";
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
