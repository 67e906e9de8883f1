#pragma once

#include <cstddef>

#include "tcseg/reliability.hpp"
#include "tcseg/tensor.hpp"

namespace tcseg {

struct LossBreakdown {
    double l_sup = 0.0;
    double l_pse = 0.0;
    double l_cal = 0.0;
    double l_mix = 0.0;
    double l_total = 0.0;
    std::size_t active_pos_count = 0;
    std::size_t active_neg_count = 0;
};

// Dice over the foreground classes 1..K-1 (averaged) plus cross entropy, summed over both branches.
Tensor supervised_loss(const Tensor& p1, const Tensor& p2, const Tensor& y_onehot);

// Mean CE over m_pos plus mean complementary CE over m_neg against the peer's
// hard labels. Empty masks contribute 0.
Tensor pseudo_loss_cross_branch(const Tensor& p_b, const Tensor& pseudo_from_peer, const MaskSet& masks);

// Mean over voxels of |p1-p2|^2 + |q1-q2|^2 + |p1-q1|^2 + |p2-q2|^2.
Tensor feature_calibration_loss(const Tensor& p1, const Tensor& p2, const Tensor& q1, const Tensor& q2);

// Unmasked CE on the mixed volume.
Tensor mix_loss(const Tensor& p_on_mixed, const Tensor& y_mixed);

struct LossParts {
    Tensor l_sup, l_pse, l_cal, l_mix;  // undefined parts count as 0
    std::size_t pos_count = 0, neg_count = 0;
};

// l_sup + w * (l_pse + l_cal + l_mix); w = 1 by default.
Tensor total_loss(const LossParts& parts, LossBreakdown& breakdown, double unsup_weight = 1.0);

} // namespace tcseg
