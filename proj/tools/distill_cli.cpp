// Command-line driver for the distillation pipeline.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

#include "distill/pipeline/stages.hpp"

namespace {

using distill::pipeline::ExperimentConfig;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string taus;
    std::optional<std::size_t> threads;
    std::string out;
};

std::vector<double> parse_taus(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw distill::ConfigError("invalid --taus entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw distill::ConfigError("--taus must list at least one value");
    return out;
}

ExperimentConfig resolve_config(const Options& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : distill::pipeline::load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.threads) cfg.threads = *o.threads;
    if (!o.out.empty()) cfg.output_root = o.out;
    if (!o.taus.empty()) cfg.sweep_taus = parse_taus(o.taus);
    cfg.resolve();
    cfg.validate();
    distill::thread_cap() = cfg.threads;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confidence-guided stereo-to-monocular distillation pipeline"};
    app.require_subcommand(1, 1);
    Options opts;

    using Stage = void (*)(const ExperimentConfig&);
    const std::vector<std::tuple<std::string, std::string, Stage>> stages{
        {"gen-data", "Generate the synthetic stereo dataset", distill::pipeline::gen_data},
        {"run-teacher", "Run the stereo teacher on every sample", distill::pipeline::run_teacher},
        {"train-conf", "Train the confidence network and write confidence maps", distill::pipeline::train_conf},
        {"make-pgt", "Threshold confidence into pseudo ground truth", distill::pipeline::make_pgt},
        {"train-student", "Train the monocular student on pseudo labels", distill::pipeline::train_student_stage},
        {"evaluate", "Evaluate the trained student on the validation split", distill::pipeline::evaluate},
        {"sweep-tau", "Sweep the confidence threshold", distill::pipeline::sweep_tau},
        {"transfer-seg", "Segmentation transfer: scratch vs depth-pretrained", distill::pipeline::transfer_seg},
        {"run-all", "Run every stage in order", distill::pipeline::run_all},
    };
    Stage chosen = nullptr;
    for (const auto& [name, help, fn] : stages) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config, "TOML config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", opts.seed, "Master seed (overrides the config)");
        sub->add_option("--threads", opts.threads, "Worker thread cap")->check(CLI::PositiveNumber);
        sub->add_option("--out", opts.out, "Output root (overrides output_root)");
        if (name == "sweep-tau" || name == "run-all") {
            sub->add_option("--taus", opts.taus, "Comma-separated thresholds, ascending");
        }
        sub->callback([&chosen, f = fn] { chosen = f; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const ExperimentConfig cfg = resolve_config(opts);
        distill::pipeline::write_snapshot(cfg);
        chosen(cfg);
    } catch (const distill::MissingInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const distill::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
