#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tcseg/binary_volume.hpp"
#include "tcseg/metrics.hpp"
#include "tcseg/tensor.hpp"

namespace tcseg {

enum class Split { labeled, unlabeled, validation, test };
const char* split_name(Split s);
Split split_from_name(const std::string& s);

enum class BlobKind { ellipsoid, warped };

struct SyntheticConfig {
    Shape volume_shape{32, 32, 32};
    // Training pool, split into labeled and unlabeled by labeled_ratio.
    std::size_t num_cases = 40;
    std::size_t num_validation = 8;
    std::size_t num_test = 12;
    double labeled_ratio = 0.1;
    std::size_t min_blobs = 1;
    std::size_t max_blobs = 3;
    BlobKind kind = BlobKind::warped;
    // Blob semi-axes as fractions of the smallest extent.
    double min_radius = 0.12;
    double max_radius = 0.28;
    // Relative amplitude of the sinusoidal radial perturbation.
    double warp_amplitude = 0.25;
    double noise_sigma = 0.15;
    double contrast = 0.6;
    // Per-case multiplicative jitter of the contrast, uniform in [1 - j, 1 + j].
    double contrast_jitter = 0.0;
    // Amplitude of a smooth additive intensity drift across the volume.
    double bias_amplitude = 0.0;
    // Unlabeled bright spheres per case, drawn at distractor_contrast * contrast.
    std::size_t distractors = 0;
    double distractor_contrast = 1.0;
    double distractor_radius = 0.1;
    // Gaussian blur of the clean image in voxels (0 = sharp edges).
    double edge_blur = 0.0;
    Spacing spacing{1.0, 1.0, 1.0};
    std::uint64_t seed = 1234;
    std::size_t max_retries = 64;

    void validate() const;
    std::size_t labeled_count() const;
};

struct Case {
    std::string id;
    Split split = Split::test;
    Tensor image;  // [1, D, H, W], z-scored per case
    BinaryVolume label;  // [D, H, W]
    Spacing spacing{1.0, 1.0, 1.0};
};

struct Dataset {
    SyntheticConfig config;
    std::vector<Case> cases;

    std::vector<const Case*> select(Split s) const;
    std::uint64_t hash() const;
};

// Deterministic in config.seed. Throws GenerationError when a case cannot
// meet the 1%-30% foreground constraint within max_retries attempts.
Dataset generate(const SyntheticConfig& cfg);

// Single case with the given index in the seeded stream.
Case generate_case(const SyntheticConfig& cfg, std::size_t index, Split split);

// What the trainer sees: unlabeled cases carry no label.
struct LabeledSample {
    const std::string* id;
    const Tensor* image;
    const BinaryVolume* label;
};
struct UnlabeledSample {
    const std::string* id;
    const Tensor* image;
};
struct TrainingView {
    std::vector<LabeledSample> labeled;
    std::vector<UnlabeledSample> unlabeled;
};
TrainingView training_view(const Dataset& d);

using Corner = std::array<std::size_t, 3>;

Corner random_corner(const Shape& volume, const Shape& patch, std::mt19937_64& rng);
// image [C, D, H, W] -> [C, pd, ph, pw]
Tensor crop(const Tensor& image, const Corner& corner, const Shape& patch);
BinaryVolume crop(const BinaryVolume& mask, const Corner& corner, const Shape& patch);

struct Patch {
    Tensor image;
    BinaryVolume label;
    Corner corner{};
};
Patch sample_patch(const Tensor& image, const BinaryVolume& label, const Shape& patch, std::mt19937_64& rng);
Tensor sample_patch(const Tensor& image, const Shape& patch, std::mt19937_64& rng);

// Window origins along one axis: multiples of stride, last one clamped to the end.
std::vector<std::size_t> window_starts(std::size_t extent, std::size_t window, std::size_t stride);

// Maps a batch of windows [B, C, w...] to probabilities [B, K, w...].
using Predictor = std::function<Tensor(const Tensor&)>;

// Averages overlapping window predictions; returns [K, D, H, W].
Tensor sliding_window_infer(const Predictor& model, const Tensor& image, const Shape& window,
                            const Shape& stride, std::size_t max_batch = 8);

// Foreground mask from [K, D, H, W] probabilities (argmax != 0).
BinaryVolume foreground_mask(const Tensor& probs);

// Writes images, labels and a tab-separated manifest (case_id, split, image, label).
void write_dataset(const Dataset& d, const std::filesystem::path& dir);

} // namespace tcseg
