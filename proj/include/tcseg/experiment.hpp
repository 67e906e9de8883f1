#pragma once
// Multi-seed protocol, ablation and sensitivity drivers, report emission.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tcseg/config.hpp"
#include "tcseg/dataset.hpp"
#include "tcseg/trainer.hpp"

namespace tcseg {

struct RunOutcome {
    std::uint64_t seed = 0;
    std::optional<RunRecord> record;  // empty when the run failed
    std::string error;
};

struct Stat {
    std::size_t n = 0;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
};

// Median (mean of the two middle values for even n), min and max; nullopt for no values.
std::optional<Stat> describe(std::vector<double> values);

enum class Protocol { best, last };
enum class Metric { dsc, asd, hd95 };
const char* protocol_name(Protocol p);
const char* metric_name(Metric m);

struct ExperimentSummary {
    std::string name;
    std::vector<RunOutcome> runs;

    std::size_t completed() const;
    std::size_t failed() const;
    // Over completed runs; distance metrics only over runs where they are defined.
    std::optional<Stat> stat(Protocol p, Metric m) const;
    // Final pseudo-label audit of each completed run.
    std::optional<Stat> ppv() const;
    std::optional<Stat> npv() const;
    std::optional<Stat> recall() const;
};

// Runs every seed of cfg.seeds. Run directories are out_root/runs/<name>/<seed>/ when out_root is
// non-empty. A run that throws is recorded as failed and the others proceed.
ExperimentSummary multi_run(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& out_root);

// Reloads every run directory under out_root/runs/<name>/.
ExperimentSummary load_experiment(const std::filesystem::path& out_root, const std::string& name);

struct AblationRow {
    std::string name;
    ExperimentSummary summary;
    // Median test DSC minus the sup_only median, per protocol.
    std::optional<double> delta_best, delta_last;
};

// Variant names and switches: sup_only, full, no_U, no_C, no_prob, no_feat, no_img.
std::vector<std::pair<std::string, AblationSwitches>> ablation_variants();
std::vector<AblationRow> ablate(const TrainConfig& base, const Dataset& data, const std::filesystem::path& out_root);
std::vector<AblationRow> ablation_table(const std::vector<ExperimentSummary>& summaries,
                                        const std::string& baseline = "sup_only");

struct SweepCell {
    double tau_min = 0.0, tau_max = 0.0, tau = 0.0;
    ExperimentSummary summary;
    std::optional<Stat> dsc_last, dsc_best;
};

struct SweepTable {
    std::vector<SweepCell> cells;
    // max - min over the per-cell last-protocol medians.
    std::optional<double> spread;
    std::optional<double> spread_best;
};

struct Band {
    double tau_min, tau_max;
};
std::vector<Band> sweep_bands();
std::vector<double> sweep_tolerances();

SweepTable sensitivity_sweep(const TrainConfig& base, const Dataset& data, const std::filesystem::path& out_root);

struct AuditRow {
    std::string name;
    std::optional<double> ppv, npv, recall;  // medians over seeds
};

struct AuditComparison {
    AuditRow baseline, method;
    std::optional<double> delta_ppv, delta_npv, delta_recall;  // method minus baseline
};

AuditComparison compare_audits(const ExperimentSummary& baseline, const ExperimentSummary& method);

struct ExperimentReport {
    std::vector<ExperimentSummary> experiments;
    std::vector<AblationRow> ablation;
    std::optional<SweepTable> sensitivity;
    std::optional<AuditComparison> audit;
};

// report.csv rows: experiment,protocol,metric,n,failed,median,min,max
std::string report_csv(const ExperimentReport& report);
std::string report_markdown(const ExperimentReport& report);
// Writes report.csv and report.md into dir.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

} // namespace tcseg
