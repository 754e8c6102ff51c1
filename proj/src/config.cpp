#include "dna/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "dna/fft.hpp"

namespace dna {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(label() + " must be an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
                    throw ConfigError("");
            }
            out = v.get<T>();
        } catch (const std::exception&) {
            throw ConfigError("invalid value for " + key_path(key) + ": " + v.dump());
        }
    }

    const json& child(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown config key '" + key_path(k) + "'");
    }

private:
    std::string label() const { return path_.empty() ? "config root" : "'" + path_ + "'"; }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class Fn>
void with_section(Section& parent, const std::string& key, Fn&& fn) {
    if (!parent.has(key)) return;
    Section s(parent.child(key), parent.key_path(key));
    fn(s);
    s.finish();
}

}  // namespace

AttackSpec AttackSection::spec(AttackFamily family, double epsilon) const {
    AttackSpec s;
    s.family = family;
    s.epsilon = epsilon;
    s.alpha = epsilon * alpha_ratio;
    s.steps = steps;
    if (family == AttackFamily::Sap) s.kernels = sap_kernels;
    return s;
}

std::filesystem::path RunConfig::root() const {
    if (const char* env = std::getenv("DNA_OUTPUT_ROOT"); env && *env) return env;
    return output_root;
}

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : root() / p;
}

RunConfig parse_config(const json& j) {
    RunConfig cfg;
    Section root(j, "");
    with_section(root, "data", [&](Section& s) {
        s.get("source", cfg.data.source);
        s.get("dir", cfg.data.dir);
        s.get("manifest", cfg.data.manifest);
        s.get("num_classes", cfg.data.synth.num_classes);
        s.get("records_per_class", cfg.data.synth.records_per_class);
        s.get("sample_rate", cfg.data.synth.sample_rate);
        s.get("seed", cfg.data.seed);
        s.get("split_seed", cfg.data.split_seed);
        s.get("train_fraction", cfg.data.train_fraction);
        s.get("length", cfg.data.length);
        cfg.data.synth.length = cfg.data.length;
        if (cfg.data.source != "synthetic" && cfg.data.source != "manifest")
            throw ConfigError("invalid value for data.source: expected \"synthetic\" or \"manifest\"");
    });
    with_section(root, "arch", [&](Section& s) {
        if (s.has("conv_blocks")) {
            const json& blocks = s.child("conv_blocks");
            if (!blocks.is_array()) throw ConfigError("invalid value for arch.conv_blocks: expected a list");
            cfg.arch.conv_blocks.clear();
            for (std::size_t i = 0; i < blocks.size(); ++i) {
                Section b(blocks[i], "arch.conv_blocks[" + std::to_string(i) + "]");
                ConvBlock cb;
                b.get("out_channels", cb.out_channels);
                b.get("kernel", cb.kernel);
                b.get("stride", cb.stride);
                b.finish();
                cfg.arch.conv_blocks.push_back(cb);
            }
        }
        s.get("feature_dim", cfg.arch.feature_dim);
    });
    with_section(root, "train", [&](Section& s) {
        s.get("epochs", cfg.train.epochs);
        s.get("batch_size", cfg.train.batch_size);
        s.get("learning_rate", cfg.train.adam.lr);
        s.get("beta1", cfg.train.adam.beta1);
        s.get("beta2", cfg.train.adam.beta2);
        s.get("adam_epsilon", cfg.train.adam.eps);
        s.get("init_seed", cfg.train.init_seed);
        s.get("shuffle_seed", cfg.train.shuffle_seed);
    });
    with_section(root, "decor", [&](Section& s) {
        s.get("r", cfg.train.decor.r);
        s.get("lambda", cfg.train.decor.lambda);
        s.get("epsilon", cfg.train.decor.eps);
        s.get("seed", cfg.train.decor.seed);
    });
    with_section(root, "bank", [&](Section& s) {
        s.get("cutoff", cfg.bank.cutoff);
        s.get("transition_width", cfg.bank.transition_width);
    });
    with_section(root, "attack", [&](Section& s) {
        if (s.has("families")) {
            const json& f = s.child("families");
            if (!f.is_array()) throw ConfigError("invalid value for attack.families: expected a list");
            cfg.attack.families.clear();
            for (const auto& v : f) {
                try {
                    cfg.attack.families.push_back(parse_attack_family(v.get<std::string>()));
                } catch (const std::exception&) {
                    throw ConfigError("invalid value for attack.families: " + v.dump());
                }
            }
        }
        s.get("epsilons", cfg.attack.epsilons);
        s.get("steps", cfg.attack.steps);
        s.get("alpha_ratio", cfg.attack.alpha_ratio);
        s.get("batch_size", cfg.attack.batch_size);
        if (s.has("sap_kernels")) {
            const json& ks = s.child("sap_kernels");
            if (!ks.is_array()) throw ConfigError("invalid value for attack.sap_kernels: expected a list");
            cfg.attack.sap_kernels.clear();
            for (std::size_t i = 0; i < ks.size(); ++i) {
                Section k(ks[i], "attack.sap_kernels[" + std::to_string(i) + "]");
                SmoothingKernel sk;
                k.get("width", sk.width);
                k.get("sigma", sk.sigma);
                k.finish();
                cfg.attack.sap_kernels.push_back(sk);
            }
        }
    });
    with_section(root, "evaluate", [&](Section& s) {
        if (s.has("kinds")) {
            const json& ks = s.child("kinds");
            if (!ks.is_array()) throw ConfigError("invalid value for evaluate.kinds: expected a list");
            cfg.kinds.clear();
            for (const auto& v : ks) {
                try {
                    cfg.kinds.push_back(parse_ensemble_kind(v.get<std::string>()));
                } catch (const std::exception&) {
                    throw ConfigError("invalid value for evaluate.kinds: " + v.dump());
                }
            }
        }
    });
    with_section(root, "output", [&](Section& s) { s.get("root", cfg.output_root); });
    root.finish();
    cfg.arch.input_length = cfg.data.length;
    cfg.arch.num_classes = cfg.data.synth.num_classes;
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

void validate(const RunConfig& cfg) {
    const auto wrap = [](const std::string& section, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(section + ": " + e.what());
        }
    };
    wrap("arch", [&] { cfg.arch.validate(); });
    bool decorrelating = false;
    for (auto k : cfg.kinds)
        for (const auto& role : arm_roles(k)) decorrelating = decorrelating || role.decorrelate;
    wrap("train", [&] { cfg.train.validate(cfg.arch, decorrelating); });
    wrap("decor", [&] { cfg.train.decor.validate(cfg.arch.feature_dim); });
    wrap("bank", [&] { design_bank(fft::next_pow2(cfg.data.length), cfg.bank.cutoff, cfg.bank.transition_width); });
    if (cfg.data.source == "manifest" && cfg.data.manifest.empty())
        throw ConfigError("data.manifest is required when data.source is \"manifest\"");
    if (!(cfg.data.train_fraction > 0.0 && cfg.data.train_fraction < 1.0))
        throw ConfigError("invalid value for data.train_fraction: must be in (0, 1)");
    if (cfg.data.synth.num_classes < 2 || cfg.data.synth.num_classes > 4)
        throw ConfigError("invalid value for data.num_classes: must be 2, 3 or 4");
    if (cfg.attack.batch_size == 0) throw ConfigError("invalid value for attack.batch_size: must be >= 1");
    for (double e : cfg.attack.epsilons)
        if (!(e >= 0.0)) throw ConfigError("invalid value for attack.epsilons: entries must be >= 0");
    for (auto f : cfg.attack.families) wrap("attack", [&] { cfg.attack.spec(f, 1.0).validate(); });
    if (cfg.kinds.empty()) throw ConfigError("evaluate.kinds must not be empty");
}

json to_json(const RunConfig& cfg) {
    json j;
    j["data"] = {{"source", cfg.data.source},
                 {"dir", cfg.data.dir},
                 {"manifest", cfg.data.manifest},
                 {"num_classes", cfg.data.synth.num_classes},
                 {"records_per_class", cfg.data.synth.records_per_class},
                 {"sample_rate", cfg.data.synth.sample_rate},
                 {"seed", cfg.data.seed},
                 {"split_seed", cfg.data.split_seed},
                 {"train_fraction", cfg.data.train_fraction},
                 {"length", cfg.data.length}};
    json blocks = json::array();
    for (const auto& b : cfg.arch.conv_blocks)
        blocks.push_back({{"out_channels", b.out_channels}, {"kernel", b.kernel}, {"stride", b.stride}});
    j["arch"] = {{"conv_blocks", blocks}, {"feature_dim", cfg.arch.feature_dim}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.adam.lr},
                  {"beta1", cfg.train.adam.beta1},
                  {"beta2", cfg.train.adam.beta2},
                  {"adam_epsilon", cfg.train.adam.eps},
                  {"init_seed", cfg.train.init_seed},
                  {"shuffle_seed", cfg.train.shuffle_seed}};
    j["decor"] = {{"r", cfg.train.decor.r},
                  {"lambda", cfg.train.decor.lambda},
                  {"epsilon", cfg.train.decor.eps},
                  {"seed", cfg.train.decor.seed}};
    j["bank"] = {{"cutoff", cfg.bank.cutoff}, {"transition_width", cfg.bank.transition_width}};
    json fams = json::array();
    for (auto f : cfg.attack.families) fams.push_back(std::string(to_string(f)));
    json ks = json::array();
    for (const auto& k : cfg.attack.sap_kernels) ks.push_back({{"width", k.width}, {"sigma", k.sigma}});
    j["attack"] = {{"families", fams},         {"epsilons", cfg.attack.epsilons},   {"steps", cfg.attack.steps},
                   {"alpha_ratio", cfg.attack.alpha_ratio}, {"sap_kernels", ks}, {"batch_size", cfg.attack.batch_size}};
    json kinds = json::array();
    for (auto k : cfg.kinds) kinds.push_back(std::string(to_string(k)));
    j["evaluate"] = {{"kinds", kinds}};
    j["output"] = {{"root", cfg.output_root}};
    return j;
}

}  // namespace dna
