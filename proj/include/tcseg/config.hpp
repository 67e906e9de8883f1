#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcseg/dataset.hpp"
#include "tcseg/morphology.hpp"
#include "tcseg/network.hpp"
#include "tcseg/reliability.hpp"

namespace tcseg {

struct AblationSwitches {
    bool disable_U = false;
    bool disable_C = false;
    bool disable_prob_space = false;
    bool disable_feat_space = false;
    bool disable_img_space = false;
    bool sup_only = false;

    bool operator==(const AblationSwitches&) const = default;
};

enum class PseudoMode { cross_branch, self_branch };

struct MorphologyConfig {
    int dilation_radius = 1;
    int connectivity = 6;
    // Centred cube (1/8 of the patch) used when the perturbation mask is empty.
    bool fallback_cube = true;
};

struct TrainConfig {
    std::string name = "full";
    NetworkConfig network;
    SyntheticConfig data;
    Shape patch{16, 16, 16};
    Shape window{16, 16, 16};
    Shape stride{16, 16, 16};
    std::size_t iterations = 1000;
    std::size_t eval_every = 50;
    // Pseudo-label audit of the unlabeled pool every k iterations; 0 audits the final model only.
    std::size_t audit_every = 0;
    std::size_t labeled_batch = 2;
    std::size_t unlabeled_batch = 2;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double ema_alpha = 0.99;
    // Linear ramp of the unsupervised weight from 0 to 1 over this many iterations (0 = constant 1).
    std::size_t unsup_rampup = 0;
    ReliabilityConfig reliability;
    MorphologyConfig morphology;
    AblationSwitches ablation;
    PseudoMode pseudo_mode = PseudoMode::cross_branch;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::size_t eval_batch = 8;
    bool save_checkpoints = true;

    // Throws ArgumentError.
    void validate() const;
    // Reliability settings after the ablation switches are applied.
    ReliabilityConfig effective_reliability() const;
    double unsup_weight(std::size_t iteration) const;
};

TrainConfig preset(const std::string& name);  // "desk" or "large"

// Nested JSON sections: network, data, train, reliability, morphology, ablation, plus name and seeds.
std::string config_to_json(const TrainConfig& cfg);
// Starts from `base` and applies the keys present in `text`. Unknown keys throw ArgumentError.
TrainConfig config_from_json(const std::string& text, const TrainConfig& base = TrainConfig{});
TrainConfig load_config(const std::filesystem::path& path, const TrainConfig& base = TrainConfig{});

} // namespace tcseg
