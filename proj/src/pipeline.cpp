#include "dna/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "dna/fft.hpp"
#include "dna/kernels.hpp"

namespace dna {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const LogFn& log, const std::string& msg) {
    if (log) log(msg);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write " + path.string());
    out << text;
    if (!out) throw PipelineError("write failed for " + path.string());
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("missing artifact " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg, json extra = json::object()) {
    json j;
    j["command"] = command;
    j["config"] = to_json(cfg);
    j["format_versions"] = {{"params", kParamsFormatVersion}, {"cache", kCacheFormatVersion}};
    j["simd_backend"] = std::string(kernels::backend_name(kernels::backend()));
    for (auto& [k, v] : extra.items()) j[k] = v;
    write_text(dir / "run_manifest.json", j.dump(2) + "\n");
}

std::string eps_label(double eps) { return format_double(eps); }

}  // namespace

TrainingData PreparedData::train_data() const {
    TrainingData d;
    d.inputs = signals_tensor(train);
    d.labels = labels_of(train);
    for (const auto& r : train.records) d.ids.push_back(r.id);
    return d;
}

void generate_data(const RunConfig& cfg, const fs::path& out, const LogFn& log) {
    const fs::path dir = out.empty() ? cfg.data_dir() : cfg.resolve(out);
    Dataset ds;
    if (cfg.data.source == "synthetic") {
        ds = synthesize(cfg.data.synth, cfg.data.seed);
    } else {
        ds = load_dataset(cfg.data.manifest);
    }
    if (ds.num_classes() != cfg.arch.num_classes)
        throw ConfigError("data.num_classes is " + std::to_string(cfg.arch.num_classes) + " but the dataset has " +
                          std::to_string(ds.num_classes()) + " classes");
    const auto split = split_indices(ds, cfg.data.train_fraction, cfg.data.split_seed);
    fs::create_directories(dir);
    write_dataset(ds, dir);
    std::string csv = "record_id,split\n";
    std::vector<const char*> tag(ds.size(), "test");
    for (std::size_t i : split.train) tag[i] = "train";
    for (std::size_t i = 0; i < ds.size(); ++i) csv += ds.records[i].id + "," + tag[i] + "\n";
    write_text(dir / "split.csv", csv);
    write_manifest(dir, "generate-data", cfg,
                   {{"records", ds.size()}, {"train", split.train.size()}, {"test", split.test.size()}});
    say(log, "wrote " + std::to_string(ds.size()) + " records (" + std::to_string(split.train.size()) + " train / " +
                 std::to_string(split.test.size()) + " test) to " + dir.string());
}

PreparedData load_prepared(const RunConfig& cfg) {
    const fs::path dir = cfg.data_dir();
    const Dataset raw = load_dataset(dir / "manifest.csv");
    std::ifstream in(dir / "split.csv");
    if (!in) throw PipelineError("missing artifact " + (dir / "split.csv").string());
    std::map<std::string, std::string> split;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        split[line.substr(0, comma)] = line.substr(comma + 1);
    }
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto it = split.find(raw.records[i].id);
        if (it == split.end()) throw PipelineError("record " + raw.records[i].id + " missing from split.csv");
        (it->second == "train" ? train_idx : test_idx).push_back(i);
    }
    const Dataset train_raw = subset(raw, train_idx);
    const NormStats stats = fit_normalization(train_raw, cfg.data.length);
    return {preprocess(train_raw, cfg.data.length, stats), preprocess(subset(raw, test_idx), cfg.data.length, stats)};
}

RingFilterBank make_bank(const RunConfig& cfg) {
    return design_bank(fft::next_pow2(cfg.data.length), cfg.bank.cutoff, cfg.bank.transition_width);
}

namespace {

fs::path arm_file(const fs::path& dir, std::size_t k, const char* suffix) {
    return dir / ("arm" + std::to_string(k) + suffix);
}

std::string curve_csv(const std::vector<CurveRow>& curve, bool with_cor) {
    std::string s = with_cor ? "epoch,ce,cor,train_accuracy\n" : "epoch,ce,train_accuracy\n";
    for (const auto& r : curve) {
        s += std::to_string(r.epoch) + "," + format_double(r.ce);
        if (with_cor) s += "," + format_double(r.cor.value_or(0.0));
        s += "," + format_double(r.train_accuracy) + "\n";
    }
    return s;
}

// Fields that fully determine the base arm.
json base_fingerprint(const RunConfig& cfg) {
    const json j = to_json(cfg);
    return {{"data", j["data"]},
            {"arch", j["arch"]},
            {"train", j["train"]},
            {"simd_backend", std::string(kernels::backend_name(kernels::backend()))}};
}

// Reuses arm 0 from a sibling ensemble trained with an identical fingerprint.
bool reuse_base_arm(const RunConfig& cfg, const fs::path& root, const fs::path& dir, const LogFn& log) {
    if (!fs::exists(root)) return false;
    const json want = base_fingerprint(cfg);
    std::vector<fs::path> siblings;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && e.path() != dir) siblings.push_back(e.path());
    std::sort(siblings.begin(), siblings.end());
    for (const auto& sib : siblings) {
        const fs::path manifest = sib / "run_manifest.json";
        if (!fs::exists(manifest) || !fs::exists(arm_file(sib, 0, ".params")) || !fs::exists(arm_file(sib, 0, ".cache")) ||
            !fs::exists(arm_file(sib, 0, "_curve.csv")))
            continue;
        json m;
        try {
            m = json::parse(read_bytes(manifest));
        } catch (const std::exception&) {
            continue;
        }
        if (!m.contains("base_fingerprint") || m["base_fingerprint"] != want) continue;
        for (const char* suffix : {".params", ".cache", "_curve.csv"})
            fs::copy_file(arm_file(sib, 0, suffix), arm_file(dir, 0, suffix), fs::copy_options::overwrite_existing);
        say(log, "arm 0: reusing base model from " + sib.string());
        return true;
    }
    return false;
}

}  // namespace

void train_command(const RunConfig& cfg, EnsembleKind kind, const fs::path& root_arg, bool force, const LogFn& log) {
    const fs::path root = cfg.resolve(root_arg);
    const fs::path dir = root / std::string(to_string(kind));
    fs::create_directories(dir);
    if (!force) {
        for (std::size_t k = 0; k < kArms; ++k)
            for (const char* suffix : {".params", ".cache", "_curve.csv"})
                if (fs::exists(arm_file(dir, k, suffix)))
                    throw PipelineError("refusing to overwrite " + arm_file(dir, k, suffix).string() +
                                        " (pass --force to retrain)");
    }
    // A stale manifest must not advertise a base arm that is about to change.
    fs::remove(dir / "run_manifest.json");

    const PreparedData prepared = load_prepared(cfg);
    const TrainingData data = prepared.train_data();
    const RingFilterBank bank = make_bank(cfg);
    const auto roles = arm_roles(kind);

    std::vector<FeatureCache> caches;
    for (std::size_t k = 0; k < kArms; ++k) {
        if (k == 0 && reuse_base_arm(cfg, root, dir, log)) {
            caches.push_back(load_cache(arm_file(dir, 0, ".cache")));
            continue;
        }
        say(log, std::string(to_string(kind)) + " arm " + std::to_string(k) + ": training");
        ArmResult arm;
        try {
            arm = train_arm(k, kind, data, cfg.arch, cfg.train, caches, bank, [&](std::size_t a, const CurveRow& r) {
                if (r.epoch % 10 == 0 || r.epoch == cfg.train.epochs) {
                    std::ostringstream os;
                    os << "  arm " << a << " epoch " << r.epoch << " ce " << r.ce;
                    if (r.cor) os << " cor " << *r.cor;
                    os << " acc " << r.train_accuracy;
                    say(log, os.str());
                }
            });
        } catch (const std::exception& e) {
            throw PipelineError("training failed for arm " + std::to_string(k) + ": " + e.what());
        }
        save_params(arm.params, arm_file(dir, k, ".params"));
        save_cache(arm.cache, arm_file(dir, k, ".cache"));
        write_text(arm_file(dir, k, "_curve.csv"), curve_csv(arm.curve, roles[k].decorrelate && k > 0));
        caches.push_back(std::move(arm.cache));
    }
    write_manifest(dir, "train", cfg, {{"kind", std::string(to_string(kind))}, {"base_fingerprint", base_fingerprint(cfg)}});
}

fs::path attack_cell_dir(const fs::path& out, AttackFamily family, double epsilon) {
    return out / (std::string(to_string(family)) + "_eps" + eps_label(epsilon));
}

namespace {

// The base arm shared by every ensemble under `root`.
std::pair<ClassifierParams, std::string> load_base_arm(const RunConfig& cfg, const fs::path& root) {
    std::optional<std::string> bytes;
    fs::path source;
    for (auto kind : cfg.kinds) {
        const fs::path p = arm_file(root / std::string(to_string(kind)), 0, ".params");
        if (!fs::exists(p)) continue;
        std::string b = read_bytes(p);
        if (!bytes) {
            bytes = std::move(b);
            source = p;
        } else if (b != *bytes) {
            throw PipelineError("base arms differ between " + source.string() + " and " + p.string());
        }
    }
    if (!bytes) throw PipelineError("no trained base arm (arm0.params) under " + root.string());
    return {load_params(source), source.string()};
}

}  // namespace

void attack_command(const RunConfig& cfg, const fs::path& ensemble_root, const fs::path& out_arg, const LogFn& log) {
    const fs::path root = cfg.resolve(ensemble_root);
    const fs::path out = cfg.resolve(out_arg);
    const auto [base, source] = load_base_arm(cfg, root);
    const PreparedData prepared = load_prepared(cfg);
    const Tensor x = signals_tensor(prepared.test);
    const auto y = labels_of(prepared.test);
    std::vector<std::string> ids;
    for (const auto& r : prepared.test.records) ids.push_back(r.id);

    fs::create_directories(out);
    const AttackTarget target{&base, nullptr, std::nullopt};
    std::vector<std::string> failed;
    for (auto family : cfg.attack.families) {
        for (double eps : cfg.attack.epsilons) {
            const fs::path cell = attack_cell_dir(out, family, eps);
            try {
                const AttackSpec spec = cfg.attack.spec(family, eps);
                AttackedSet set = craft_set(target, base, ids, x, y, spec, "arm0");
                save_attacked_set(set, cell);
                say(log, "attack " + cell.filename().string() + ": " + std::to_string(set.masked_count()) + "/" +
                             std::to_string(set.ids.size()) + " masked");
            } catch (const std::exception& e) {
                failed.push_back(cell.filename().string() + " (" + e.what() + ")");
            }
        }
    }
    write_manifest(out, "attack", cfg, {{"base_arm", source}});
    if (!failed.empty()) {
        std::string msg = "attack cells failed:";
        for (const auto& f : failed) msg += " " + f;
        throw PipelineError(msg);
    }
}

void evaluate_command(const RunConfig& cfg, const fs::path& ensemble_root, const fs::path& attacks_arg,
                      const fs::path& report_arg, const LogFn& log) {
    const fs::path root = cfg.resolve(ensemble_root);
    const fs::path attacks = cfg.resolve(attacks_arg);
    const fs::path report = cfg.resolve(report_arg);
    const PreparedData prepared = load_prepared(cfg);
    const Tensor x = signals_tensor(prepared.test);
    const auto y = labels_of(prepared.test);
    const RingFilterBank bank = make_bank(cfg);

    std::map<std::pair<AttackFamily, double>, AttackedSet> sets;
    for (auto family : cfg.attack.families)
        for (double eps : cfg.attack.epsilons) {
            const fs::path cell = attack_cell_dir(attacks, family, eps);
            if (!fs::exists(cell / "index.csv")) throw PipelineError("missing artifact " + (cell / "index.csv").string());
            sets.emplace(std::make_pair(family, eps), load_attacked_set(cell));
        }

    std::string csv = "kind,attack,epsilon,average,p1,p2,p3,n_masked\n";
    const auto row_text = [](std::string_view kind, std::string_view attack, double eps, const MetricsRow& m) {
        return std::string(kind) + "," + std::string(attack) + "," + format_double(eps) + "," + format_double(m.average) +
               "," + format_double(m.p1) + "," + format_double(m.p2) + "," + format_double(m.p3) + "," +
               std::to_string(m.n) + "\n";
    };
    json corr = json::object();
    for (auto kind : cfg.kinds) {
        const fs::path dir = root / std::string(to_string(kind));
        std::vector<ClassifierParams> arms;
        std::vector<FeatureCache> caches;
        for (std::size_t k = 0; k < kArms; ++k) {
            const fs::path p = arm_file(dir, k, ".params");
            const fs::path c = arm_file(dir, k, ".cache");
            if (!fs::exists(p)) throw PipelineError("missing artifact " + p.string());
            if (!fs::exists(c)) throw PipelineError("missing artifact " + c.string());
            arms.push_back(load_params(p));
            caches.push_back(load_cache(c));
        }
        csv += row_text(to_string(kind), "none", 0.0, evaluate(arms, kind, bank, x, y));
        for (auto family : cfg.attack.families)
            for (double eps : cfg.attack.epsilons) {
                const AttackedSet& set = sets.at({family, eps});
                csv += row_text(to_string(kind), to_string(family), eps,
                                evaluate(arms, kind, bank, set.perturbed, set.labels, set.mask));
            }
        const CorrelationReport rep = correlation_report(caches);
        json raw = json::array(), clamped = json::array();
        for (std::size_t i = 0; i < kArms; ++i) {
            json r1 = json::array(), r2 = json::array();
            for (std::size_t j = 0; j < kArms; ++j) {
                r1.push_back(rep.r2[i][j]);
                r2.push_back(rep.clamped(i, j));
            }
            raw.push_back(r1);
            clamped.push_back(r2);
        }
        corr[std::string(to_string(kind))] = {{"r2", raw},
                                               {"r2_clamped", clamped},
                                               {"pair_mean", {{"0-1", rep.pair_mean(0, 1)}, {"0-2", rep.pair_mean(0, 2)}, {"1-2", rep.pair_mean(1, 2)}}},
                                               {"mean_off_diagonal", rep.mean_off_diagonal()}};
        say(log, std::string(to_string(kind)) + ": mean off-diagonal R^2 " + format_double(rep.mean_off_diagonal()));
    }
    if (report.has_parent_path()) fs::create_directories(report.parent_path());
    write_text(report, csv);
    fs::path corr_path = report;
    corr_path.replace_extension(".correlation.json");
    write_text(corr_path, corr.dump(2) + "\n");
    say(log, "wrote " + report.string() + " and " + corr_path.string());
}

}  // namespace dna
