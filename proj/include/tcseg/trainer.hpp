#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tcseg/config.hpp"
#include "tcseg/dataset.hpp"
#include "tcseg/losses.hpp"
#include "tcseg/metrics.hpp"
#include "tcseg/network.hpp"
#include "tcseg/reliability.hpp"

namespace tcseg {

struct Batch {
    Tensor x_l;  // [2, 1, d, h, w]
    Tensor y_l;  // one-hot [2, K, d, h, w]
    std::vector<std::int32_t> labels_l;  // [2, d, h, w]
    Tensor x_u;  // [2, 1, d, h, w]
};

Batch make_batch(const TrainingView& view, const TrainConfig& cfg, std::mt19937_64& rng);

// Independent random streams of one run.
struct RunStreams {
    std::mt19937_64 data;
    std::mt19937_64 mix;
    std::uint64_t init_seed = 0;
};
RunStreams make_streams(std::uint64_t seed);

struct TrainState {
    ModelPair model;
    RunStreams streams;
    std::size_t iteration = 0;
    std::size_t fallback_count = 0;
    // Where a batch is dumped if a loss turns non-finite (empty: no dump).
    std::filesystem::path dump_dir;

    TrainState(const TrainConfig& cfg, std::uint64_t seed);
};

// Intermediate products of one step, for inspection in tests and debugging.
struct StepTrace {
    MaskSet masks;
    BinaryVolume m_per;  // [nu, d, h, w] before any fallback
    std::vector<std::size_t> pair;  // labeled partner of each unlabeled sample
    std::size_t fallbacks = 0;
    Tensor x_mix;
    std::vector<std::int32_t> y_mix_1, y_mix_2;  // targets for branch 1 and branch 2
};

// One optimisation step. Throws TrainingError (after dumping the batch) on a non-finite loss.
LossBreakdown train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg, StepTrace* trace = nullptr);

// Probabilities for a batch of windows: mean of both student branches, or one branch (1 or 2).
Predictor student_predictor(const ModelPair& model, int branch = 0);
Predictor teacher_predictor(const ModelPair& model);

std::vector<SegScore> evaluate(const Predictor& predictor, const std::vector<const Case*>& cases,
                               const TrainConfig& cfg);
double mean_dsc(const std::vector<SegScore>& scores);

// Full-volume pseudo labels (teacher branch average) on the unlabeled pool
// scored against the held labels, counts summed over cases.
AuditScore audit_pseudo_labels(const ModelPair& model, const Dataset& data, const TrainConfig& cfg);

// Case-averaged test summary; distance metrics average the cases where they are defined.
struct ScoreSummary {
    double dsc = 0.0;
    std::optional<double> asd;
    std::optional<double> hd95;
    std::size_t missing_distance = 0;
};
ScoreSummary summarize(const std::vector<SegScore>& scores);

struct RunRecord {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::size_t, double>> val_dsc;  // (iteration, mean DSC)
    std::size_t best_iteration = 0;
    double best_val_dsc = 0.0;
    double last_val_dsc = 0.0;
    std::size_t last_iteration = 0;
    ScoreSummary test_best, test_last;
    std::vector<LossBreakdown> loss_log;
    std::vector<std::pair<std::size_t, AuditScore>> audit;
    std::size_t fallback_count = 0;
    double seconds = 0.0;  // wall time, excluded from the hash

    std::uint64_t hash() const;
    std::string to_json() const;
};

// Trains one seed. When out_dir is non-empty writes checkpoint_best.tcck,
// checkpoint_last.tcck, loss_log.csv, eval_log.csv and run_record.json there.
RunRecord run(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed, const std::filesystem::path& out_dir);

// Reads run_record.json and loss_log.csv written by run(); throws FormatError if the stored hash disagrees.
RunRecord load_run(const std::filesystem::path& dir);

void write_loss_log(const std::filesystem::path& path, const std::vector<LossBreakdown>& log);
std::vector<LossBreakdown> read_loss_log(const std::filesystem::path& path);

} // namespace tcseg
