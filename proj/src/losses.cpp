#include "tcseg/losses.hpp"

#include "tcseg/errors.hpp"
#include "tcseg/ops.hpp"

namespace tcseg {

namespace {

Tensor foreground_dice(const Tensor& p, const Tensor& y) {
    const std::size_t k = p.dim(1);
    Tensor acc;
    for (std::size_t c = 1; c < k; ++c) {
        Tensor d = dice_loss(select_channel(p, c), select_channel(y, c));
        acc = acc.defined() ? add(acc, d) : d;
    }
    return k > 2 ? scale(acc, 1.0 / static_cast<double>(k - 1)) : acc;
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.defined() || !b.defined()) throw ArgumentError(std::string(op) + ": missing input");
    if (a.shape() != b.shape())
        throw ArgumentError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
}

double value_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

} // namespace

Tensor supervised_loss(const Tensor& p1, const Tensor& p2, const Tensor& y_onehot) {
    if (!y_onehot.defined()) throw ArgumentError("supervised_loss: labels are required");
    require_same(p1, y_onehot, "supervised_loss");
    require_same(p2, y_onehot, "supervised_loss");
    Tensor b1 = add(foreground_dice(p1, y_onehot), cross_entropy(p1, y_onehot));
    Tensor b2 = add(foreground_dice(p2, y_onehot), cross_entropy(p2, y_onehot));
    return add(b1, b2);
}

Tensor pseudo_loss_cross_branch(const Tensor& p_b, const Tensor& pseudo_from_peer, const MaskSet& masks) {
    require_same(p_b, pseudo_from_peer, "pseudo_loss_cross_branch");
    Tensor pos = masks.m_pos.to_tensor(), neg = masks.m_neg.to_tensor();
    return add(masked_cross_entropy(p_b, pseudo_from_peer, pos),
               masked_negative_cross_entropy(p_b, pseudo_from_peer, neg));
}

Tensor feature_calibration_loss(const Tensor& p1, const Tensor& p2, const Tensor& q1, const Tensor& q2) {
    require_same(p1, p2, "feature_calibration_loss");
    require_same(p1, q1, "feature_calibration_loss");
    require_same(p1, q2, "feature_calibration_loss");
    Tensor a = add(mean_squared_distance(p1, p2), mean_squared_distance(q1, q2));
    Tensor b = add(mean_squared_distance(p1, q1), mean_squared_distance(p2, q2));
    return add(a, b);
}

Tensor mix_loss(const Tensor& p_on_mixed, const Tensor& y_mixed) {
    require_same(p_on_mixed, y_mixed, "mix_loss");
    return cross_entropy(p_on_mixed, y_mixed);
}

Tensor total_loss(const LossParts& parts, LossBreakdown& breakdown, double unsup_weight) {
    if (!parts.l_sup.defined()) throw ArgumentError("total_loss: supervised term is required");
    Tensor unsup;
    for (const Tensor* t : {&parts.l_pse, &parts.l_cal, &parts.l_mix})
        if (t->defined()) unsup = unsup.defined() ? add(unsup, *t) : *t;
    Tensor total = parts.l_sup;
    if (unsup.defined()) total = add(total, unsup_weight == 1.0 ? unsup : scale(unsup, unsup_weight));
    breakdown.l_sup = parts.l_sup.item();
    breakdown.l_pse = value_or_zero(parts.l_pse);
    breakdown.l_cal = value_or_zero(parts.l_cal);
    breakdown.l_mix = value_or_zero(parts.l_mix);
    breakdown.l_total = total.item();
    breakdown.active_pos_count = parts.pos_count;
    breakdown.active_neg_count = parts.neg_count;
    return total;
}

} // namespace tcseg
