#include "tcseg/reliability.hpp"

#include <algorithm>
#include <cmath>

#include "tcseg/errors.hpp"
#include "tcseg/ops.hpp"

namespace tcseg {

namespace {

Shape drop_class_axis(const Tensor& p, const char* op) {
    if (p.rank() < 2) throw ArgumentError(std::string(op) + ": expected [N, K, ...], got " + shape_str(p.shape()));
    Shape s = p.shape();
    s.erase(s.begin() + 1);
    return s;
}

Tensor l1_over_classes(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ArgumentError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    Shape out_shape = drop_class_axis(a, op);
    const std::size_t n = a.dim(0), k = a.dim(1), s = a.numel() / (n * k);
    auto av = a.values(), bv = b.values();
    std::vector<double> out(n * s, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t v = 0; v < s; ++v) {
                const std::size_t j = (i * k + c) * s + v;
                out[i * s + v] += std::abs(av[j] - bv[j]);
            }
    return Tensor(std::move(out_shape), std::move(out));
}

} // namespace

void ReliabilityConfig::validate() const {
    if (!std::isfinite(tau_min) || !std::isfinite(tau_max) || !(tau_min < tau_max))
        throw ArgumentError("reliability: confidence band requires tau_min < tau_max");
    if (!(tau > 0.0)) throw ArgumentError("reliability: consistency tolerance must be positive");
    if (!(epsilon > 0.0)) throw ArgumentError("reliability: epsilon must be positive");
    if (!(proto_temperature > 0.0)) throw ArgumentError("reliability: prototype temperature must be positive");
}

Tensor PrototypeBank::as_tensor() const { return Tensor(Shape{num_classes, feature_dim}, mu); }

Tensor confidence(std::span<const Tensor> views) {
    if (views.size() != 4)
        throw ArgumentError("confidence: expected 4 prediction views, got " + std::to_string(views.size()));
    for (const auto& v : views)
        if (v.shape() != views[0].shape()) throw ArgumentError("confidence: view shapes differ");
    Shape out_shape = drop_class_axis(views[0], "confidence");
    const std::size_t n = views[0].dim(0), k = views[0].dim(1), s = views[0].numel() / (n * k);
    std::vector<double> out(n * s);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t v = 0; v < s; ++v) {
            double best = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const std::size_t j = (i * k + c) * s + v;
                double m = 0.0;
                for (const auto& view : views) m += view.values()[j];
                best = std::max(best, m / static_cast<double>(views.size()));
            }
            out[i * s + v] = best;
        }
    return Tensor(std::move(out_shape), std::move(out));
}

Tensor prob_uncertainty(const Tensor& p1, const Tensor& p2) { return l1_over_classes(p1, p2, "prob_uncertainty"); }

Tensor feat_uncertainty(const Tensor& q1, const Tensor& q2) { return l1_over_classes(q1, q2, "feat_uncertainty"); }

std::vector<std::int32_t> argmax_labels(const Tensor& p) {
    drop_class_axis(p, "argmax_labels");
    const std::size_t n = p.dim(0), k = p.dim(1), s = p.numel() / (n * k);
    auto pv = p.values();
    std::vector<std::int32_t> out(n * s);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t v = 0; v < s; ++v) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < k; ++c)
                if (pv[(i * k + c) * s + v] > pv[(i * k + best) * s + v]) best = c;
            out[i * s + v] = static_cast<std::int32_t>(best);
        }
    return out;
}

Tensor one_hot(std::span<const std::int32_t> labels, std::size_t num_classes, const Shape& batch_spatial) {
    if (batch_spatial.empty() || shape_numel(batch_spatial) != labels.size())
        throw ArgumentError("one_hot: label count does not match shape " + shape_str(batch_spatial));
    const std::size_t n = batch_spatial[0], s = labels.size() / n;
    Shape shape = batch_spatial;
    shape.insert(shape.begin() + 1, num_classes);
    std::vector<double> out(n * num_classes * s, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t v = 0; v < s; ++v) {
            const auto c = labels[i * s + v];
            if (c < 0 || static_cast<std::size_t>(c) >= num_classes)
                throw ArgumentError("one_hot: label " + std::to_string(c) + " out of range");
            out[(i * num_classes + c) * s + v] = 1.0;
        }
    return Tensor(std::move(shape), std::move(out));
}

PrototypeBank build_prototypes(const Tensor& features, std::span<const std::int32_t> pred_labels,
                               const Tensor& C, std::size_t num_classes, const ReliabilityConfig& cfg) {
    if (features.rank() < 2) throw ArgumentError("build_prototypes: features must be [N, F, ...]");
    const std::size_t n = features.dim(0), f = features.dim(1), s = features.numel() / (n * f);
    if (pred_labels.size() != n * s || C.numel() != n * s)
        throw ArgumentError("build_prototypes: labels/confidence not aligned with features");
    PrototypeBank bank;
    bank.num_classes = num_classes;
    bank.feature_dim = f;
    bank.mu.assign(num_classes * f, 0.0);
    bank.pass_count.assign(num_classes, 0);
    auto zv = features.values();
    auto cv = C.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t v = 0; v < s; ++v) {
            if (!(cv[i * s + v] >= cfg.tau_max)) continue;
            const auto k = static_cast<std::size_t>(pred_labels[i * s + v]);
            if (k >= num_classes) throw ArgumentError("build_prototypes: label out of range");
            ++bank.pass_count[k];
            for (std::size_t j = 0; j < f; ++j) bank.mu[k * f + j] += zv[(i * f + j) * s + v];
        }
    for (std::size_t k = 0; k < num_classes; ++k) {
        const double denom = static_cast<double>(bank.pass_count[k]) + cfg.epsilon;
        for (std::size_t j = 0; j < f; ++j) bank.mu[k * f + j] /= denom;
    }
    return bank;
}

Tensor proto_similarity(const Tensor& features, const PrototypeBank& bank, const ReliabilityConfig& cfg) {
    if (features.rank() < 2 || features.dim(1) != bank.feature_dim)
        throw ArgumentError("proto_similarity: feature width does not match prototype bank");
    Tensor cos = cosine_similarity_map(features, bank.as_tensor(), cfg.epsilon);
    return softmax(scale(cos, 1.0 / cfg.proto_temperature), 1);
}

MaskSet build_masks(const ReliabilityField& field, const ReliabilityConfig& cfg) {
    cfg.validate();
    const Shape& shape = field.C.shape();
    for (const Tensor* t : {&field.U_pro_s, &field.U_pro_t, &field.U_fea_s, &field.U_fea_t})
        if (!t->defined() || t->shape() != shape)
            throw ArgumentError("build_masks: reliability field maps are missing or misaligned");
    const std::size_t m = field.C.numel();
    auto C = field.C.values();
    auto ups = field.U_pro_s.values(), upt = field.U_pro_t.values();
    auto ufs = field.U_fea_s.values(), uft = field.U_fea_t.values();
    MaskSet out{BinaryVolume(shape), BinaryVolume(shape), BinaryVolume(shape), BinaryVolume(shape),
                BinaryVolume(shape)};
    for (std::size_t i = 0; i < m; ++i) {
        const bool consistent = !cfg.use_uncertainty ||
                                (ups[i] <= cfg.tau && upt[i] <= cfg.tau && ufs[i] <= cfg.tau && uft[i] <= cfg.tau);
        const bool high = !cfg.use_confidence || C[i] >= cfg.tau_max;
        const bool low = cfg.use_confidence && C[i] <= cfg.tau_min;
        out.m_U_neg.set(i, consistent);
        out.m_pos.set(i, high && consistent);
        out.m_neg.set(i, low && consistent && !high);
        out.m_C_minus.set(i, !high);
        out.m_C_plus_U_plus.set(i, high && !consistent);
    }
    return out;
}

} // namespace tcseg
