#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "tcseg/experiment.hpp"

using namespace tcseg;
namespace fs = std::filesystem;

namespace {

RunOutcome fake_run(std::uint64_t seed, double best, double last, std::optional<double> asd, double ppv) {
    RunRecord r;
    r.name = "fake";
    r.seed = seed;
    r.test_best.dsc = best;
    r.test_last.dsc = last;
    r.test_best.asd = asd;
    r.test_last.asd = asd;
    AuditScore a;
    a.ppv = ppv;
    a.npv = 1.0 - ppv / 10.0;
    a.recall = ppv / 2.0;
    r.audit.push_back({100, a});
    return RunOutcome{seed, r, {}};
}

ExperimentSummary fake_summary(const std::string& name, std::vector<double> best, std::vector<double> last) {
    ExperimentSummary s;
    s.name = name;
    for (std::size_t i = 0; i < best.size(); ++i)
        s.runs.push_back(fake_run(i + 1, best[i], last[i], std::optional<double>(i % 2 ? 1.0 + i : 2.0 + i), 0.5 + 0.1 * i));
    return s;
}

double sorted_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.data.num_cases = 10;
    c.data.labeled_ratio = 0.2;
    c.data.num_validation = 2;
    c.data.num_test = 2;
    c.iterations = 2;
    c.eval_every = 1;
    c.seeds = {1, 2};
    c.save_checkpoints = false;
    return c;
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("tcseg_exp_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

} // namespace

TEST(Describe, FiveValuesMedianIsThirdOrderStatistic) {
    const auto s = describe({0.9, 0.1, 0.5, 0.7, 0.3});
    ASSERT_TRUE(s);
    EXPECT_EQ(s->n, 5u);
    EXPECT_EQ(s->median, 0.5);
    EXPECT_EQ(s->min, 0.1);
    EXPECT_EQ(s->max, 0.9);
    EXPECT_EQ(describe({4.0, 1.0})->median, 2.5);
    EXPECT_FALSE(describe({}));
}

TEST(Describe, MatchesSortOracleOnRandomSamples) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (std::size_t n = 1; n <= 40; ++n) {
        std::vector<double> v(n);
        for (double& x : v) x = u(rng);
        const auto s = describe(v);
        ASSERT_TRUE(s);
        EXPECT_EQ(s->median, sorted_median(v));
        EXPECT_EQ(s->min, *std::min_element(v.begin(), v.end()));
        EXPECT_EQ(s->max, *std::max_element(v.begin(), v.end()));
    }
}

TEST(ExperimentSummary, StatsSkipFailuresAndMissingDistances) {
    ExperimentSummary s = fake_summary("x", {0.8, 0.6, 0.9, 0.7}, {0.7, 0.6, 0.85, 0.65});
    s.runs[1].record->test_last.asd.reset();
    s.runs.push_back(RunOutcome{9, std::nullopt, "diverged"});
    EXPECT_EQ(s.completed(), 4u);
    EXPECT_EQ(s.failed(), 1u);
    EXPECT_EQ(s.stat(Protocol::best, Metric::dsc)->median, sorted_median({0.8, 0.6, 0.9, 0.7}));
    EXPECT_EQ(s.stat(Protocol::last, Metric::dsc)->min, 0.6);
    const auto asd = s.stat(Protocol::last, Metric::asd);
    ASSERT_TRUE(asd);
    EXPECT_EQ(asd->n, 3u);
    EXPECT_FALSE(s.stat(Protocol::last, Metric::hd95));
    EXPECT_EQ(s.ppv()->median, sorted_median({0.5, 0.6, 0.7, 0.8}));
    EXPECT_EQ(s.recall()->max, 0.4);
}

TEST(AuditComparison, SignedDeltas) {
    const ExperimentSummary base = fake_summary("sup_only", {0.5, 0.5, 0.5}, {0.5, 0.5, 0.5});
    ExperimentSummary method = fake_summary("full", {0.6, 0.6, 0.6}, {0.6, 0.6, 0.6});
    for (auto& r : method.runs) {
        auto& a = r.record->audit.back().second;
        a.ppv = *a.ppv - 0.05;
        a.recall = *a.recall + 0.1;
    }
    const AuditComparison c = compare_audits(base, method);
    EXPECT_NEAR(*c.delta_ppv, -0.05, 1e-12);
    EXPECT_NEAR(*c.delta_recall, 0.1, 1e-12);
    EXPECT_NEAR(*c.delta_npv, 0.0, 1e-12);
    EXPECT_EQ(c.baseline.name, "sup_only");
    EXPECT_EQ(c.method.name, "full");
}

TEST(AblationTable, DeltasAgainstBaseline) {
    const auto rows = ablation_table({fake_summary("sup_only", {0.5, 0.6, 0.7}, {0.4, 0.5, 0.6}),
                                      fake_summary("full", {0.8, 0.9, 0.7}, {0.7, 0.8, 0.9})});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_NEAR(*rows[0].delta_best, 0.0, 1e-12);
    EXPECT_NEAR(*rows[1].delta_best, 0.2, 1e-12);
    EXPECT_NEAR(*rows[1].delta_last, 0.3, 1e-12);
    const auto names = ablation_variants();
    ASSERT_EQ(names.size(), 7u);
    EXPECT_EQ(names.front().first, "sup_only");
    EXPECT_TRUE(names.front().second.sup_only);
}

TEST(Report, CsvSchemaAndValues) {
    ExperimentReport rep;
    rep.experiments.push_back(fake_summary("full", {0.8, 0.6, 0.9}, {0.7, 0.6, 0.85}));
    const auto rows = lines(report_csv(rep));
    ASSERT_FALSE(rows.empty());
    EXPECT_EQ(rows[0], "experiment,protocol,metric,n,failed,median,min,max");
    bool found = false;
    for (const auto& r : rows)
        if (r.rfind("full,last,dsc,3,0,", 0) == 0) {
            found = true;
            std::istringstream in(r.substr(std::string("full,last,dsc,3,0,").size()));
            double med, lo, hi;
            char comma;
            in >> med >> comma >> lo >> comma >> hi;
            EXPECT_DOUBLE_EQ(med, 0.7);
            EXPECT_DOUBLE_EQ(lo, 0.6);
            EXPECT_DOUBLE_EQ(hi, 0.85);
        }
    EXPECT_TRUE(found);
    const std::string md = report_markdown(rep);
    EXPECT_NE(md.find("full"), std::string::npos);
    EXPECT_NE(md.find("70.00"), std::string::npos);

    const fs::path dir = scratch("report");
    write_report(rep, dir);
    EXPECT_TRUE(fs::exists(dir / "report.csv"));
    EXPECT_TRUE(fs::exists(dir / "report.md"));
}

TEST(MultiRun, ProtocolInvariantsAndReload) {
    const TrainConfig cfg = tiny_config();
    const Dataset data = generate(cfg.data);
    const fs::path root = scratch("multi");
    const ExperimentSummary s = multi_run(cfg, data, root);
    ASSERT_EQ(s.completed(), 2u);
    for (const auto& r : s.runs) EXPECT_GE(r.record->best_val_dsc, r.record->last_val_dsc);
    std::vector<double> last;
    for (const auto& r : s.runs) last.push_back(r.record->test_last.dsc);
    EXPECT_EQ(s.stat(Protocol::last, Metric::dsc)->median, sorted_median(last));

    const ExperimentSummary back = load_experiment(root, cfg.name);
    ASSERT_EQ(back.runs.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.runs[i].seed, s.runs[i].seed);
        EXPECT_EQ(back.runs[i].record->hash(), s.runs[i].record->hash());
    }
    EXPECT_THROW(load_experiment(root, "absent"), std::exception);
}

TEST(Sweep, NineCellsWithSpread) {
    TrainConfig cfg = tiny_config();
    cfg.seeds = {1};
    cfg.iterations = 1;
    const Dataset data = generate(cfg.data);
    const SweepTable t = sensitivity_sweep(cfg, data, scratch("sweep"));
    ASSERT_EQ(t.cells.size(), 9u);
    double lo = 1e9, hi = -1e9;
    for (const auto& c : t.cells) {
        ASSERT_TRUE(c.dsc_last);
        EXPECT_LT(c.tau_min, c.tau_max);
        lo = std::min(lo, c.dsc_last->median);
        hi = std::max(hi, c.dsc_last->median);
    }
    ASSERT_TRUE(t.spread);
    EXPECT_DOUBLE_EQ(*t.spread, hi - lo);
    ExperimentReport rep;
    rep.sensitivity = t;
    const std::string md = report_markdown(rep);
    EXPECT_NE(md.find("Spread"), std::string::npos);
}
