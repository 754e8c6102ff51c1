#include "dna/signal_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace dna {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty())
        throw DataError("unparsable float '" + std::string(text) + "'");
    return v;
}

std::vector<double> read_signal(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("missing signal file " + path.string());
    std::vector<double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        try {
            out.push_back(parse_double(line));
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) throw DataError("empty signal in " + path.string());
    return out;
}

void write_signal(const fs::path& path, std::span<const double> signal) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (double v : signal) out << format_double(v) << '\n';
    if (!out) throw DataError("write failed for " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cols;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cols.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cols.push_back(cur);
    return cols;
}

}  // namespace

Dataset load_dataset(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw DataError("missing manifest " + manifest.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("no records in " + manifest.string());
    const auto header = split_csv_line(line);
    const auto col = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("manifest is missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t id_col = col("record_id"), label_col = col("label"), path_col = col("path");

    Dataset ds;
    std::map<std::string, int> label_index;
    const fs::path base = manifest.parent_path();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cols = split_csv_line(line);
        if (cols.size() != header.size())
            throw DataError(manifest.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " columns");
        Record rec;
        rec.id = cols[id_col];
        const auto [it, inserted] = label_index.try_emplace(cols[label_col], static_cast<int>(ds.class_names.size()));
        if (inserted) ds.class_names.push_back(cols[label_col]);
        rec.label = it->second;
        fs::path p = cols[path_col];
        if (p.is_relative()) p = base / p;
        rec.signal = read_signal(p);
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty()) throw DataError("no records in " + manifest.string());
    return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
    fs::create_directories(dir / "signals");
    std::ofstream manifest(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
    if (!manifest) throw DataError("cannot write manifest in " + dir.string());
    manifest << "record_id,label,path\n";
    for (const auto& rec : dataset.records) {
        const std::string rel = "signals/" + rec.id + ".txt";
        write_signal(dir / rel, rec.signal);
        manifest << rec.id << ',' << dataset.class_names.at(static_cast<std::size_t>(rec.label)) << ',' << rel << '\n';
    }
}

namespace {

struct ClassStyle {
    double hr_lo, hr_hi;     // beats per minute
    double rr_jitter;        // relative half-range of per-beat RR variation
    double p_amp;
    double qrs_sigma;        // seconds
    double fib_amp;          // fibrillatory wave amplitude
    double snr_db;           // <= 0 disables added broadband noise
    double wander_amp;
};

ClassStyle style_for(int label) {
    switch (label) {
        case 0: return {55, 95, 0.03, 0.15, 0.011, 0.0, 0.0, 0.05};
        case 1: return {85, 140, 0.30, 0.0, 0.0075, 0.06, 0.0, 0.05};
        case 2: return {55, 95, 0.03, 0.15, 0.016, 0.0, 5.0, 0.05};
        default: return {55, 95, 0.03, 0.15, 0.013, 0.0, 0.0, 1.5};
    }
}

double bump(double t, double centre, double sigma) {
    const double d = (t - centre) / sigma;
    return std::exp(-0.5 * d * d);
}

std::vector<double> synth_record(int label, const SynthConfig& cfg, std::mt19937_64& rng) {
    const ClassStyle st = style_for(label);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double fs = cfg.sample_rate;
    const std::size_t n = cfg.length;
    const double duration = static_cast<double>(n) / fs;

    const double hr = st.hr_lo + (st.hr_hi - st.hr_lo) * unit(rng);
    const double rr_mean = 60.0 / hr;
    const double gain = 0.8 + 0.4 * unit(rng);

    std::vector<double> beats;
    double t = -rr_mean * unit(rng);
    while (t < duration + 0.5) {
        beats.push_back(t);
        t += rr_mean * (1.0 + st.rr_jitter * (2.0 * unit(rng) - 1.0));
    }

    std::vector<double> x(n, 0.0);
    const double qs = st.qrs_sigma;
    for (double r : beats) {
        const double r_amp = 0.9 + 0.2 * unit(rng);
        for (std::size_t i = 0; i < n; ++i) {
            const double ti = static_cast<double>(i) / fs;
            if (std::abs(ti - r) > 0.6) continue;
            double v = r_amp * bump(ti, r, qs);
            v -= 0.12 * bump(ti, r - 2.5 * qs, qs);
            v -= 0.25 * bump(ti, r + 2.5 * qs, qs);
            v += st.p_amp * bump(ti, r - 0.16, 0.02);
            v += 0.3 * bump(ti, r + 0.28, 0.05);
            x[i] += v;
        }
    }

    if (st.fib_amp > 0.0) {
        const double f1 = 5.0 + 3.0 * unit(rng), f2 = 5.0 + 3.0 * unit(rng);
        const double ph1 = 2.0 * std::numbers::pi * unit(rng), ph2 = 2.0 * std::numbers::pi * unit(rng);
        for (std::size_t i = 0; i < n; ++i) {
            const double ti = static_cast<double>(i) / fs;
            x[i] += st.fib_amp * (std::sin(2.0 * std::numbers::pi * f1 * ti + ph1) +
                                  0.6 * std::sin(2.0 * std::numbers::pi * f2 * ti + ph2));
        }
    }

    {
        const double fw = 0.15 + 0.35 * unit(rng);
        const double fw2 = 0.05 + 0.1 * unit(rng);
        const double ph = 2.0 * std::numbers::pi * unit(rng), ph2 = 2.0 * std::numbers::pi * unit(rng);
        for (std::size_t i = 0; i < n; ++i) {
            const double ti = static_cast<double>(i) / fs;
            x[i] += st.wander_amp * (std::sin(2.0 * std::numbers::pi * fw * ti + ph) +
                                     0.5 * std::sin(2.0 * std::numbers::pi * fw2 * ti + ph2));
        }
    }

    if (st.snr_db > 0.0) {
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(n);
        double power = 0.0;
        for (double v : x) power += (v - mean) * (v - mean);
        power /= static_cast<double>(n);
        const double sd = std::sqrt(power / std::pow(10.0, st.snr_db / 10.0));
        for (double& v : x) v += sd * gauss(rng);
    }

    for (double& v : x) v = gain * (v + 0.02 * gauss(rng));
    return x;
}

}  // namespace

Dataset synthesize(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.num_classes < 2 || cfg.num_classes > 4) throw std::invalid_argument("num_classes must be in {2,3,4}");
    if (cfg.records_per_class == 0) throw std::invalid_argument("records_per_class must be positive");
    if (cfg.length == 0) throw std::invalid_argument("length must be positive");
    if (!(cfg.sample_rate > 0.0)) throw std::invalid_argument("sample_rate must be positive");

    static const char* kNames[] = {"normal", "irregular", "noisy", "wander"};
    Dataset ds;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) ds.class_names.emplace_back(kNames[c]);
    std::mt19937_64 rng(seed);
    // Interleave classes so record order carries no label blocks.
    for (std::size_t i = 0; i < cfg.records_per_class; ++i) {
        for (std::size_t c = 0; c < cfg.num_classes; ++c) {
            Record rec;
            char id[32];
            std::snprintf(id, sizeof(id), "rec%05zu", ds.records.size());
            rec.id = id;
            rec.label = static_cast<int>(c);
            rec.signal = synth_record(rec.label, cfg, rng);
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

std::vector<double> crop_or_pad(std::span<const double> x, std::size_t length) {
    std::vector<double> out(length, 0.0);
    if (x.size() >= length) {
        const std::size_t off = (x.size() - length) / 2;
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(off), length, out.begin());
    } else {
        const std::size_t off = (length - x.size()) / 2;
        std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
    }
    return out;
}

NormStats fit_normalization(const Dataset& train, std::size_t length) {
    if (train.records.empty()) throw DataError("cannot fit normalization on an empty split");
    double sum = 0.0, count = 0.0;
    std::vector<std::vector<double>> fixed;
    fixed.reserve(train.size());
    for (const auto& rec : train.records) {
        fixed.push_back(crop_or_pad(rec.signal, length));
        for (double v : fixed.back()) sum += v;
        count += static_cast<double>(length);
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (const auto& f : fixed)
        for (double v : f) ss += (v - mean) * (v - mean);
    return {mean, std::max(std::sqrt(ss / count), 1e-8)};
}

Dataset preprocess(const Dataset& dataset, std::size_t length, const NormStats& stats) {
    if (length == 0) throw std::invalid_argument("preprocess length must be positive");
    Dataset out;
    out.class_names = dataset.class_names;
    out.fixed_length = length;
    out.stats = stats;
    out.records.reserve(dataset.size());
    for (const auto& rec : dataset.records) {
        Record r{rec.id, crop_or_pad(rec.signal, length), rec.label};
        for (double& v : r.signal) v = (v - stats.mean) / stats.std;
        out.records.push_back(std::move(r));
    }
    return out;
}

SplitIndices split_indices(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction must be in (0, 1)");
    std::vector<std::vector<std::size_t>> by_class(dataset.num_classes());
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class.at(static_cast<std::size_t>(dataset.records[i].label)).push_back(i);
    std::mt19937_64 rng(seed);
    SplitIndices s;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 2)
            throw DataError("class '" + dataset.class_names[c] + "' has fewer than 2 records; cannot split");
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * train_fraction));
        n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
    Dataset out;
    out.class_names = dataset.class_names;
    out.fixed_length = dataset.fixed_length;
    out.stats = dataset.stats;
    for (std::size_t i : indices) out.records.push_back(dataset.records.at(i));
    return out;
}

Tensor signals_tensor(const Dataset& dataset) {
    if (dataset.records.empty()) return Tensor(Shape{0, 0});
    const std::size_t l = dataset.records.front().signal.size();
    Tensor t({dataset.size(), l});
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& s = dataset.records[i].signal;
        if (s.size() != l) throw ShapeError("signals_tensor requires equal-length signals");
        std::copy(s.begin(), s.end(), t.ptr() + i * l);
    }
    return t;
}

std::vector<int> labels_of(const Dataset& dataset) {
    std::vector<int> y;
    y.reserve(dataset.size());
    for (const auto& r : dataset.records) y.push_back(r.label);
    return y;
}

}  // namespace dna
