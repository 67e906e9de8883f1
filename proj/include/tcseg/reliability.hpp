#pragma once
// Dual-axis reliability: ensemble confidence versus cross-decoder
// disagreement in probability space and in prototype-similarity space.

#include <cstdint>
#include <span>
#include <vector>

#include "tcseg/binary_volume.hpp"
#include "tcseg/tensor.hpp"

namespace tcseg {

struct ReliabilityConfig {
    double tau_min = 0.1;
    double tau_max = 0.85;
    // Consistency tolerance shared by the probability and feature axes.
    double tau = 0.05;
    double epsilon = 1e-8;
    double proto_temperature = 0.1;
    // Ablation switches. Without uncertainty every voxel counts as consistent;
    // without confidence every consistent voxel is a positive.
    bool use_uncertainty = true;
    bool use_confidence = true;

    // Throws ArgumentError. The band may lie partly outside [0, 1] (an
    // unreachable band switches pseudo supervision off) but must be ordered.
    void validate() const;
};

// Per-voxel maps over [N, D, H, W].
struct ReliabilityField {
    Tensor C;
    Tensor U_pro_s, U_pro_t;
    Tensor U_fea_s, U_fea_t;
};

struct MaskSet {
    BinaryVolume m_U_neg;
    BinaryVolume m_pos;
    BinaryVolume m_neg;
    BinaryVolume m_C_plus_U_plus;
    BinaryVolume m_C_minus;
};

struct PrototypeBank {
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    std::vector<double> mu;  // [num_classes][feature_dim]
    std::vector<std::size_t> pass_count;

    std::span<const double> prototype(std::size_t k) const {
        return std::span<const double>(mu).subspan(k * feature_dim, feature_dim);
    }
    Tensor as_tensor() const;
};

// Max over classes of the mean of exactly four probability views [N, K, ...].
Tensor confidence(std::span<const Tensor> views);

// Per-voxel L1 distance over the class axis; [N, K, ...] -> [N, ...].
Tensor prob_uncertainty(const Tensor& p1, const Tensor& p2);
Tensor feat_uncertainty(const Tensor& q1, const Tensor& q2);

// Argmax over the class axis, flattened in [N, ...] order. Ties go to the lower class.
std::vector<std::int32_t> argmax_labels(const Tensor& p);

// One-hot encoding [N, K, ...] of labels laid out as [N, spatial...] with the given spatial shape.
Tensor one_hot(std::span<const std::int32_t> labels, std::size_t num_classes, const Shape& batch_spatial);

// mu_k = sum_{v in V_k} [C(v) >= tau_max] z_v / (count + eps).
PrototypeBank build_prototypes(const Tensor& features, std::span<const std::int32_t> pred_labels,
                               const Tensor& C, std::size_t num_classes, const ReliabilityConfig& cfg);

// softmax_k(cos(z_v, mu_k) / T); differentiable with respect to features only.
Tensor proto_similarity(const Tensor& features, const PrototypeBank& bank, const ReliabilityConfig& cfg);

MaskSet build_masks(const ReliabilityField& field, const ReliabilityConfig& cfg);

} // namespace tcseg
