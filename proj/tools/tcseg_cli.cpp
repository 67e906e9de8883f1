// Command-line driver: data generation, training, multi-seed experiments and reports.

#include <cstdint>
#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcseg/config.hpp"
#include "tcseg/dataset.hpp"
#include "tcseg/errors.hpp"
#include "tcseg/experiment.hpp"
#include "tcseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace tcseg;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string preset = "desk";
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    std::string out = "out";
    std::optional<std::size_t> iterations;
    std::optional<std::string> name;
    bool disable_U = false;
    bool disable_C = false;
    bool disable_prob_space = false;
    bool disable_feat_space = false;
    bool disable_img_space = false;
    bool sup_only = false;
};

void add_common(CLI::App* app, CommonOptions& o, bool with_ablation) {
    app->add_option("--config", o.config_path, "JSON config file applied on top of the preset")->check(CLI::ExistingFile);
    app->add_option("--preset", o.preset, "Base configuration")->check(CLI::IsMember({"desk", "large"}));
    app->add_option("--seed", o.seed, "Single seed (overrides the seed list)");
    app->add_option("--seeds", o.seeds, "Seed list, comma separated")->delimiter(',');
    app->add_option("--out", o.out, "Output root directory");
    app->add_option("--iterations", o.iterations, "Override the iteration count");
    app->add_option("--name", o.name, "Experiment name (run directory under runs/)");
    if (!with_ablation) return;
    app->add_flag("--disable-U", o.disable_U, "Confidence-only gating");
    app->add_flag("--disable-C", o.disable_C, "Uncertainty-only gating");
    app->add_flag("--disable-prob-space", o.disable_prob_space, "Drop the pseudo-label loss");
    app->add_flag("--disable-feat-space", o.disable_feat_space, "Drop the feature calibration loss");
    app->add_flag("--disable-img-space", o.disable_img_space, "Drop the mixed-image loss");
    app->add_flag("--sup-only", o.sup_only, "Supervised loss only");
}

TrainConfig resolve(const CommonOptions& o) {
    TrainConfig cfg = preset(o.preset);
    if (!o.config_path.empty()) cfg = load_config(o.config_path, cfg);
    if (o.seed) cfg.seeds = {*o.seed};
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (o.iterations) cfg.iterations = *o.iterations;
    AblationSwitches& a = cfg.ablation;
    a.disable_U = a.disable_U || o.disable_U;
    a.disable_C = a.disable_C || o.disable_C;
    a.disable_prob_space = a.disable_prob_space || o.disable_prob_space;
    a.disable_feat_space = a.disable_feat_space || o.disable_feat_space;
    a.disable_img_space = a.disable_img_space || o.disable_img_space;
    a.sup_only = a.sup_only || o.sup_only;
    if (o.name) cfg.name = *o.name;
    else if (a.sup_only) cfg.name = "sup_only";
    cfg.validate();
    return cfg;
}

Dataset make_data(const TrainConfig& cfg) {
    std::cerr << "generating " << (cfg.data.num_cases + cfg.data.num_validation + cfg.data.num_test)
              << " synthetic cases\n";
    return generate(cfg.data);
}

void save_config(const TrainConfig& cfg, const fs::path& root) {
    fs::create_directories(root);
    std::ofstream(root / ("config_" + cfg.name + ".json")) << config_to_json(cfg) << '\n';
}

void print_summary(const ExperimentSummary& s) {
    std::cout << s.name << ": " << s.completed() << " completed, " << s.failed() << " failed\n";
    for (Protocol p : {Protocol::best, Protocol::last})
        if (auto st = s.stat(p, Metric::dsc))
            std::cout << "  " << protocol_name(p) << " test DSC median " << st->median << " [" << st->min << ", "
                      << st->max << "]\n";
}

int finish(const ExperimentReport& report, const fs::path& root) {
    write_report(report, root);
    std::cout << report_markdown(report);
    std::cout << "report written to " << (root / "report.md").string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised volumetric segmentation with dual-decoder reliability gating"};
    app.require_subcommand(1);

    CommonOptions gen_o, train_o, multi_o, ablate_o, sweep_o, audit_o;
    std::string report_root = "out";

    auto* gen = app.add_subcommand("generate-data", "Write the synthetic benchmark as TCSV1 volumes");
    add_common(gen, gen_o, false);
    auto* train = app.add_subcommand("train", "Train one seed");
    add_common(train, train_o, true);
    auto* multi = app.add_subcommand("multi-run", "Train every seed and report median/min/max");
    add_common(multi, multi_o, true);
    auto* abl = app.add_subcommand("ablate", "Run all ablation variants");
    add_common(abl, ablate_o, false);
    auto* sweep = app.add_subcommand("sweep", "Confidence band x tolerance sensitivity grid");
    add_common(sweep, sweep_o, true);
    auto* aud = app.add_subcommand("audit", "Pseudo-label audit of sup_only against the full method");
    add_common(aud, audit_o, false);
    auto* rep = app.add_subcommand("report", "Rebuild report.csv/report.md from saved runs");
    rep->add_option("--out", report_root, "Output root containing runs/");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const TrainConfig cfg = resolve(gen_o);
            const Dataset d = make_data(cfg);
            write_dataset(d, fs::path(gen_o.out) / "data");
            std::cout << "dataset hash " << d.hash() << " written to " << (fs::path(gen_o.out) / "data").string()
                      << '\n';
            return 0;
        }
        if (train->parsed()) {
            const TrainConfig cfg = resolve(train_o);
            if (cfg.seeds.size() != 1) throw ArgumentError("train takes exactly one seed (use --seed)");
            const Dataset d = make_data(cfg);
            save_config(cfg, train_o.out);
            const fs::path dir = fs::path(train_o.out) / "runs" / cfg.name / std::to_string(cfg.seeds[0]);
            const RunRecord r = run(cfg, d, cfg.seeds[0], dir);
            std::cout << "best iteration " << r.best_iteration << " val DSC " << r.best_val_dsc << "\n"
                      << "test DSC best " << r.test_best.dsc << " last " << r.test_last.dsc << "\n"
                      << "run hash " << r.hash() << " in " << r.seconds << " s\n";
            return 0;
        }
        if (multi->parsed()) {
            const TrainConfig cfg = resolve(multi_o);
            const Dataset d = make_data(cfg);
            save_config(cfg, multi_o.out);
            ExperimentReport report;
            report.experiments.push_back(multi_run(cfg, d, multi_o.out));
            print_summary(report.experiments.back());
            return finish(report, multi_o.out);
        }
        if (abl->parsed()) {
            const TrainConfig cfg = resolve(ablate_o);
            const Dataset d = make_data(cfg);
            save_config(cfg, ablate_o.out);
            ExperimentReport report;
            report.ablation = ablate(cfg, d, ablate_o.out);
            return finish(report, ablate_o.out);
        }
        if (sweep->parsed()) {
            TrainConfig cfg = resolve(sweep_o);
            if (!sweep_o.name) cfg.name = "sweep";
            const Dataset d = make_data(cfg);
            save_config(cfg, sweep_o.out);
            ExperimentReport report;
            report.sensitivity = sensitivity_sweep(cfg, d, sweep_o.out);
            return finish(report, sweep_o.out);
        }
        if (aud->parsed()) {
            TrainConfig full = resolve(audit_o);
            full.ablation = AblationSwitches{};
            full.name = "full";
            TrainConfig sup = full;
            sup.ablation.sup_only = true;
            sup.name = "sup_only";
            const Dataset d = make_data(full);
            save_config(full, audit_o.out);
            ExperimentReport report;
            report.experiments.push_back(multi_run(sup, d, audit_o.out));
            report.experiments.push_back(multi_run(full, d, audit_o.out));
            report.audit = compare_audits(report.experiments[0], report.experiments[1]);
            return finish(report, audit_o.out);
        }
        if (rep->parsed()) {
            const fs::path runs = fs::path(report_root) / "runs";
            if (!fs::is_directory(runs)) throw ArgumentError("no runs/ directory under " + report_root);
            std::vector<std::string> names;
            for (const auto& e : fs::directory_iterator(runs))
                if (e.is_directory()) names.push_back(e.path().filename().string());
            std::sort(names.begin(), names.end());
            ExperimentReport report;
            for (const auto& n : names) report.experiments.push_back(load_experiment(report_root, n));
            const auto find = [&](const std::string& n) -> const ExperimentSummary* {
                for (const auto& s : report.experiments)
                    if (s.name == n) return &s;
                return nullptr;
            };
            if (find("sup_only") && find("full")) report.audit = compare_audits(*find("sup_only"), *find("full"));
            bool any_ablation = false;
            for (const auto& [n, sw] : ablation_variants())
                if (n != "sup_only" && n != "full" && find(n)) any_ablation = true;
            if (any_ablation && find("sup_only")) report.ablation = ablation_table(report.experiments);
            return finish(report, report_root);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
