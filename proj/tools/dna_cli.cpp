// Command-line driver: generate-data, train, attack, evaluate.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.

#include <iostream>

#include <CLI11.hpp>

#include "dna/pipeline.hpp"

namespace {

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decorrelated ensembles for 1-D signal classification"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    std::string kind_name;
    std::string ensemble_dir;
    std::string attacks_dir;
    bool force = false;

    auto* gen = app.add_subcommand("generate-data", "Synthesize or import the dataset and fix the split");
    gen->add_option("--config", config_path, "Run configuration (JSON)")->required();
    gen->add_option("--out", out, "Data directory (defaults to data.dir)");

    auto* train = app.add_subcommand("train", "Train one three-arm ensemble");
    train->add_option("--config", config_path)->required();
    train->add_option("--kind", kind_name, "cor | dec | fcor | fdec")->required();
    train->add_option("--out", out, "Ensemble root; arms go to <out>/<kind>/")->required();
    train->add_flag("--force", force, "Overwrite existing arm files");

    auto* attack = app.add_subcommand("attack", "Craft PGD/SAP sets against the base arm");
    attack->add_option("--config", config_path)->required();
    attack->add_option("--ensemble-dir", ensemble_dir)->required();
    attack->add_option("--out", out)->required();

    auto* eval = app.add_subcommand("evaluate", "Score every ensemble on natural and attacked sets");
    eval->add_option("--config", config_path)->required();
    eval->add_option("--ensemble-dir", ensemble_dir)->required();
    eval->add_option("--attacks", attacks_dir)->required();
    eval->add_option("--out", out, "Report CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    dna::RunConfig cfg;
    std::optional<dna::EnsembleKind> kind;
    try {
        cfg = dna::load_config(config_path);
        if (train->parsed()) kind = dna::parse_ensemble_kind(kind_name);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (gen->parsed()) {
            dna::generate_data(cfg, out, log_line);
        } else if (train->parsed()) {
            dna::train_command(cfg, *kind, out, force, log_line);
        } else if (attack->parsed()) {
            dna::attack_command(cfg, ensemble_dir, out, log_line);
        } else {
            dna::evaluate_command(cfg, ensemble_dir, attacks_dir, out, log_line);
        }
    } catch (const dna::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
