#include "tcseg/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tcseg/errors.hpp"

namespace tcseg {

std::optional<Stat> describe(std::vector<double> values) {
    if (values.empty()) return std::nullopt;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    Stat s;
    s.n = n;
    s.min = values.front();
    s.max = values.back();
    s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    return s;
}

const char* protocol_name(Protocol p) { return p == Protocol::best ? "best" : "last"; }

const char* metric_name(Metric m) {
    switch (m) {
    case Metric::dsc: return "dsc";
    case Metric::asd: return "asd";
    case Metric::hd95: return "hd95";
    }
    return "?";
}

std::size_t ExperimentSummary::completed() const {
    return static_cast<std::size_t>(
        std::count_if(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.record.has_value(); }));
}

std::size_t ExperimentSummary::failed() const { return runs.size() - completed(); }

std::optional<Stat> ExperimentSummary::stat(Protocol p, Metric m) const {
    std::vector<double> v;
    for (const auto& r : runs) {
        if (!r.record) continue;
        const ScoreSummary& s = p == Protocol::best ? r.record->test_best : r.record->test_last;
        if (m == Metric::dsc) v.push_back(s.dsc);
        else if (m == Metric::asd && s.asd) v.push_back(*s.asd);
        else if (m == Metric::hd95 && s.hd95) v.push_back(*s.hd95);
    }
    return describe(std::move(v));
}

namespace {

template <typename Get>
std::optional<Stat> final_audit_stat(const std::vector<RunOutcome>& runs, Get get) {
    std::vector<double> v;
    for (const auto& r : runs) {
        if (!r.record || r.record->audit.empty()) continue;
        const std::optional<double> x = get(r.record->audit.back().second);
        if (x) v.push_back(*x);
    }
    return describe(std::move(v));
}

std::optional<double> median_of(const std::optional<Stat>& s) {
    return s ? std::optional<double>(s->median) : std::nullopt;
}

std::optional<double> minus(const std::optional<double>& a, const std::optional<double>& b) {
    return a && b ? std::optional<double>(*a - *b) : std::nullopt;
}

std::filesystem::path run_dir(const std::filesystem::path& root, const std::string& name, std::uint64_t seed) {
    return root / "runs" / name / std::to_string(seed);
}

} // namespace

std::optional<Stat> ExperimentSummary::ppv() const {
    return final_audit_stat(runs, [](const AuditScore& a) { return a.ppv; });
}
std::optional<Stat> ExperimentSummary::npv() const {
    return final_audit_stat(runs, [](const AuditScore& a) { return a.npv; });
}
std::optional<Stat> ExperimentSummary::recall() const {
    return final_audit_stat(runs, [](const AuditScore& a) { return a.recall; });
}

ExperimentSummary multi_run(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& out_root) {
    cfg.validate();
    if (cfg.seeds.empty()) throw ArgumentError("multi_run: empty seed list");
    ExperimentSummary out;
    out.name = cfg.name;
    for (std::uint64_t seed : cfg.seeds) {
        RunOutcome o;
        o.seed = seed;
        try {
            o.record = run(cfg, data, seed, out_root.empty() ? std::filesystem::path{} : run_dir(out_root, cfg.name, seed));
        } catch (const std::exception& e) {
            o.error = e.what();
            std::cerr << cfg.name << " seed " << seed << " failed: " << e.what() << '\n';
        }
        out.runs.push_back(std::move(o));
    }
    return out;
}

ExperimentSummary load_experiment(const std::filesystem::path& out_root, const std::string& name) {
    const auto dir = out_root / "runs" / name;
    if (!std::filesystem::is_directory(dir)) throw ArgumentError("no runs under " + dir.string());
    ExperimentSummary out;
    out.name = name;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        RunOutcome o;
        try {
            o.seed = std::stoull(entry.path().filename().string());
        } catch (const std::exception&) {
            continue;
        }
        try {
            o.record = load_run(entry.path());
        } catch (const std::exception& e) {
            o.error = e.what();
        }
        out.runs.push_back(std::move(o));
    }
    std::sort(out.runs.begin(), out.runs.end(), [](const RunOutcome& a, const RunOutcome& b) { return a.seed < b.seed; });
    return out;
}

std::vector<std::pair<std::string, AblationSwitches>> ablation_variants() {
    std::vector<std::pair<std::string, AblationSwitches>> v;
    AblationSwitches s;
    s.sup_only = true;
    v.emplace_back("sup_only", s);
    v.emplace_back("full", AblationSwitches{});
    s = {};
    s.disable_U = true;
    v.emplace_back("no_U", s);
    s = {};
    s.disable_C = true;
    v.emplace_back("no_C", s);
    s = {};
    s.disable_prob_space = true;
    v.emplace_back("no_prob", s);
    s = {};
    s.disable_feat_space = true;
    v.emplace_back("no_feat", s);
    s = {};
    s.disable_img_space = true;
    v.emplace_back("no_img", s);
    return v;
}

std::vector<AblationRow> ablation_table(const std::vector<ExperimentSummary>& summaries, const std::string& baseline) {
    const auto base = std::find_if(summaries.begin(), summaries.end(),
                                   [&](const ExperimentSummary& s) { return s.name == baseline; });
    std::optional<double> base_best, base_last;
    if (base != summaries.end()) {
        base_best = median_of(base->stat(Protocol::best, Metric::dsc));
        base_last = median_of(base->stat(Protocol::last, Metric::dsc));
    }
    std::vector<AblationRow> rows;
    for (const auto& s : summaries) {
        AblationRow r;
        r.name = s.name;
        r.summary = s;
        r.delta_best = minus(median_of(s.stat(Protocol::best, Metric::dsc)), base_best);
        r.delta_last = minus(median_of(s.stat(Protocol::last, Metric::dsc)), base_last);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<AblationRow> ablate(const TrainConfig& base, const Dataset& data, const std::filesystem::path& out_root) {
    std::vector<ExperimentSummary> summaries;
    for (const auto& [name, sw] : ablation_variants()) {
        TrainConfig cfg = base;
        cfg.name = name;
        cfg.ablation = sw;
        summaries.push_back(multi_run(cfg, data, out_root));
    }
    return ablation_table(summaries);
}

std::vector<Band> sweep_bands() { return {{0.1, 0.85}, {0.05, 0.95}, {0.2, 0.75}}; }
std::vector<double> sweep_tolerances() { return {0.01, 0.05, 0.10}; }

SweepTable sensitivity_sweep(const TrainConfig& base, const Dataset& data, const std::filesystem::path& out_root) {
    SweepTable table;
    std::vector<double> last, best;
    for (const Band& band : sweep_bands())
        for (double tau : sweep_tolerances()) {
            TrainConfig cfg = base;
            cfg.reliability.tau_min = band.tau_min;
            cfg.reliability.tau_max = band.tau_max;
            cfg.reliability.tau = tau;
            char name[96];
            std::snprintf(name, sizeof name, "%s_band%.2f-%.2f_tol%.2f", base.name.c_str(), band.tau_min,
                          band.tau_max, tau);
            cfg.name = name;
            SweepCell cell;
            cell.tau_min = band.tau_min;
            cell.tau_max = band.tau_max;
            cell.tau = tau;
            cell.summary = multi_run(cfg, data, out_root);
            cell.dsc_last = cell.summary.stat(Protocol::last, Metric::dsc);
            cell.dsc_best = cell.summary.stat(Protocol::best, Metric::dsc);
            if (cell.dsc_last) last.push_back(cell.dsc_last->median);
            if (cell.dsc_best) best.push_back(cell.dsc_best->median);
            table.cells.push_back(std::move(cell));
        }
    if (auto s = describe(last)) table.spread = s->max - s->min;
    if (auto s = describe(best)) table.spread_best = s->max - s->min;
    return table;
}

AuditComparison compare_audits(const ExperimentSummary& baseline, const ExperimentSummary& method) {
    auto row = [](const ExperimentSummary& s) {
        return AuditRow{s.name, median_of(s.ppv()), median_of(s.npv()), median_of(s.recall())};
    };
    AuditComparison c;
    c.baseline = row(baseline);
    c.method = row(method);
    c.delta_ppv = minus(c.method.ppv, c.baseline.ppv);
    c.delta_npv = minus(c.method.npv, c.baseline.npv);
    c.delta_recall = minus(c.method.recall, c.baseline.recall);
    return c;
}

namespace {

std::string num(const std::optional<double>& v, const char* fmt = "%.4f") {
    if (!v) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, *v);
    return buf;
}

std::string signed_num(const std::optional<double>& v) { return num(v, "%+.4f"); }

// DSC is shown in percent, distances in mm.
std::string cell(const std::optional<Stat>& s, Metric m) {
    if (!s) return "-";
    const double k = m == Metric::dsc ? 100.0 : 1.0;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.2f [%.2f, %.2f]", k * s->median, k * s->min, k * s->max);
    return buf;
}

void csv_rows(std::ostream& out, const ExperimentSummary& s, const std::string& label) {
    for (Protocol p : {Protocol::best, Protocol::last})
        for (Metric m : {Metric::dsc, Metric::asd, Metric::hd95}) {
            const auto st = s.stat(p, m);
            char buf[256];
            if (st)
                std::snprintf(buf, sizeof buf, "%s,%s,%s,%zu,%zu,%.17g,%.17g,%.17g\n", label.c_str(), protocol_name(p),
                              metric_name(m), st->n, s.failed(), st->median, st->min, st->max);
            else
                std::snprintf(buf, sizeof buf, "%s,%s,%s,0,%zu,,,\n", label.c_str(), protocol_name(p), metric_name(m),
                              s.failed());
            out << buf;
        }
}

} // namespace

std::string report_csv(const ExperimentReport& report) {
    std::ostringstream out;
    out << "experiment,protocol,metric,n,failed,median,min,max\n";
    for (const auto& s : report.experiments) csv_rows(out, s, s.name);
    for (const auto& r : report.ablation) csv_rows(out, r.summary, r.summary.name);
    if (report.sensitivity)
        for (const auto& c : report.sensitivity->cells) csv_rows(out, c.summary, c.summary.name);
    return out.str();
}

std::string report_markdown(const ExperimentReport& report) {
    std::ostringstream out;
    auto table = [&](const std::vector<const ExperimentSummary*>& rows) {
        out << "| Experiment | Runs | Failed | Protocol | DSC (%) | ASD (mm) | 95HD (mm) |\n";
        out << "|---|---|---|---|---|---|---|\n";
        for (const auto* s : rows)
            for (Protocol p : {Protocol::best, Protocol::last})
                out << "| " << s->name << " | " << s->completed() << " | " << s->failed() << " | " << protocol_name(p)
                    << " | " << cell(s->stat(p, Metric::dsc), Metric::dsc) << " | "
                    << cell(s->stat(p, Metric::asd), Metric::asd) << " | "
                    << cell(s->stat(p, Metric::hd95), Metric::hd95) << " |\n";
        out << "\nCells are median [min, max] over completed runs.\n\n";
    };
    if (!report.experiments.empty()) {
        out << "## Test scores\n\n";
        std::vector<const ExperimentSummary*> rows;
        for (const auto& s : report.experiments) rows.push_back(&s);
        table(rows);
    }
    if (!report.ablation.empty()) {
        out << "## Ablation\n\n";
        out << "| Variant | Runs | DSC best (%) | DSC last (%) | delta best | delta last |\n";
        out << "|---|---|---|---|---|---|\n";
        for (const auto& r : report.ablation) {
            auto pct = [](const std::optional<double>& v) {
                return v ? std::optional<double>(100.0 * *v) : std::nullopt;
            };
            out << "| " << r.name << " | " << r.summary.completed() << " | "
                << cell(r.summary.stat(Protocol::best, Metric::dsc), Metric::dsc) << " | "
                << cell(r.summary.stat(Protocol::last, Metric::dsc), Metric::dsc) << " | "
                << num(pct(r.delta_best), "%+.2f") << " | " << num(pct(r.delta_last), "%+.2f") << " |\n";
        }
        out << "\nDeltas are median DSC points relative to sup_only.\n\n";
    }
    if (report.sensitivity) {
        const SweepTable& t = *report.sensitivity;
        out << "## Sensitivity\n\n";
        out << "Median last-protocol test DSC (%) per confidence band and tolerance.\n\n";
        out << "| Band |";
        for (double tau : sweep_tolerances()) out << " tol " << num(tau, "%.2f") << " |";
        out << "\n|---|";
        for (std::size_t i = 0; i < sweep_tolerances().size(); ++i) out << "---|";
        out << '\n';
        for (const Band& b : sweep_bands()) {
            out << "| [" << num(b.tau_min, "%.2f") << ", " << num(b.tau_max, "%.2f") << "] |";
            for (double tau : sweep_tolerances()) {
                const auto it = std::find_if(t.cells.begin(), t.cells.end(), [&](const SweepCell& c) {
                    return c.tau_min == b.tau_min && c.tau_max == b.tau_max && c.tau == tau;
                });
                std::optional<double> v;
                if (it != t.cells.end() && it->dsc_last) v = 100.0 * it->dsc_last->median;
                out << ' ' << num(v, "%.2f") << " |";
            }
            out << '\n';
        }
        auto pct = [](const std::optional<double>& v) { return v ? std::optional<double>(100.0 * *v) : std::nullopt; };
        out << "\nSpread (max - min of the cell medians): last " << num(pct(t.spread), "%.2f") << ", best "
            << num(pct(t.spread_best), "%.2f") << " DSC points.\n\n";
    }
    if (report.audit) {
        const AuditComparison& a = *report.audit;
        out << "## Pseudo-label audit (unlabeled pool)\n\n";
        out << "| Model | PPV | NPV | Recall |\n|---|---|---|---|\n";
        for (const AuditRow* r : {&a.baseline, &a.method})
            out << "| " << r->name << " | " << num(r->ppv) << " | " << num(r->npv) << " | " << num(r->recall) << " |\n";
        out << "| delta | " << signed_num(a.delta_ppv) << " | " << signed_num(a.delta_npv) << " | "
            << signed_num(a.delta_recall) << " |\n\n";
    }
    return out.str();
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "report.csv");
    std::ofstream md(dir / "report.md");
    if (!csv || !md) throw FormatError("cannot write report into " + dir.string());
    csv << report_csv(report);
    md << report_markdown(report);
}

} // namespace tcseg
