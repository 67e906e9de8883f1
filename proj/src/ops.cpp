#include "tcseg/ops.hpp"

#include <algorithm>
#include <cmath>

#include "tcseg/errors.hpp"
#include "tcseg/ops_detail.hpp"

namespace tcseg {

using detail::TensorImpl;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ArgumentError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
}

// [N, C, S] view of a tensor with rank >= 2.
struct ClassLayout {
    std::size_t n, c, s;
};

ClassLayout class_layout(const Tensor& t, const char* op) {
    if (t.rank() < 2)
        throw ArgumentError(std::string(op) + ": expected [N, C, ...], got " + shape_str(t.shape()));
    const Shape& sh = t.shape();
    return {sh[0], sh[1], shape_numel(sh) / (sh[0] * sh[1])};
}

// Mask shape must be the class tensor's shape with the class axis removed.
void check_mask(const Tensor& p, const Tensor& mask, const char* op) {
    Shape expect = p.shape();
    expect.erase(expect.begin() + 1);
    Shape got = mask.shape();
    if (got != expect)
        throw ArgumentError(std::string(op) + ": mask shape " + shape_str(got) + " does not match " +
                            shape_str(expect));
    for (double m : mask.values())
        if (m != 0.0 && m != 1.0) throw ArgumentError(std::string(op) + ": mask must be binary");
}

} // namespace

std::span<double> detail::grad_of(const Tensor& t) {
    if (!needs_grad(t)) return {};
    return t.impl()->grad_buffer();
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto av = a.values(), bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
        for (const Tensor* t : {&a, &b}) {
            auto g = detail::grad_of(*t);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto av = a.values(), bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
        auto ga = detail::grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
        auto gb = detail::grad_of(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto av = a.values(), bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
        auto av = a.values(), bv = b.values();
        auto ga = detail::grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * bv[i];
        auto gb = detail::grad_of(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * av[i];
    });
}

Tensor scale(const Tensor& a, double s) {
    auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    return make_result(a.shape(), std::move(out), {a}, [a, s](const TensorImpl& o) {
        auto ga = detail::grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * s;
    });
}

Tensor relu(const Tensor& a) {
    auto av = a.values();
    std::vector<double> out(av.size());
    // NaN passes through so corrupted inputs surface as a non-finite loss.
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] < 0.0 ? 0.0 : av[i];
    return make_result(a.shape(), std::move(out), {a}, [a](const TensorImpl& o) {
        auto ga = detail::grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (o.values[i] > 0.0) ga[i] += o.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return make_result(Shape{1}, {s}, {a}, [a](const TensorImpl& o) {
        auto ga = detail::grad_of(a);
        for (double& g : ga) g += o.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor softmax(const Tensor& logits, std::size_t axis) {
    const Shape& sh = logits.shape();
    if (axis >= sh.size())
        throw ArgumentError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                            shape_str(sh));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    const std::size_t k = sh[axis];
    auto x = logits.values();
    std::vector<double> y(x.size());
    for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base = o * k * inner;
        for (std::size_t i = 0; i < inner; ++i) {
            double m = x[base + i];
            for (std::size_t c = 1; c < k; ++c) m = std::max(m, x[base + c * inner + i]);
            double z = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                double e = std::exp(x[base + c * inner + i] - m);
                y[base + c * inner + i] = e;
                z += e;
            }
            for (std::size_t c = 0; c < k; ++c) y[base + c * inner + i] /= z;
        }
    }
    return make_result(sh, std::move(y), {logits}, [logits, outer, inner, k](const TensorImpl& o) {
        auto g = detail::grad_of(logits);
        for (std::size_t b = 0; b < outer; ++b) {
            const std::size_t base = b * k * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                double dot = 0.0;
                for (std::size_t c = 0; c < k; ++c)
                    dot += o.grad[base + c * inner + i] * o.values[base + c * inner + i];
                for (std::size_t c = 0; c < k; ++c) {
                    const std::size_t j = base + c * inner + i;
                    g[j] += o.values[j] * (o.grad[j] - dot);
                }
            }
        }
    });
}

Tensor select_channel(const Tensor& x, std::size_t c) {
    auto [n, ch, s] = class_layout(x, "select_channel");
    if (c >= ch) throw ArgumentError("select_channel: channel out of range");
    Shape out_shape = x.shape();
    out_shape[1] = 1;
    auto xv = x.values();
    std::vector<double> out(n * s);
    for (std::size_t b = 0; b < n; ++b)
        std::copy_n(xv.begin() + (b * ch + c) * s, s, out.begin() + b * s);
    return make_result(std::move(out_shape), std::move(out), {x},
                       [x, n = n, ch = ch, s = s, c](const TensorImpl& o) {
                           auto g = detail::grad_of(x);
                           for (std::size_t b = 0; b < n; ++b)
                               for (std::size_t i = 0; i < s; ++i) g[(b * ch + c) * s + i] += o.grad[b * s + i];
                       });
}

Tensor slice_batch(const Tensor& x, std::size_t begin, std::size_t count) {
    if (x.rank() < 1 || count == 0 || begin + count > x.dim(0))
        throw ArgumentError("slice_batch: range out of bounds for " + shape_str(x.shape()));
    const std::size_t row = x.numel() / x.dim(0);
    Shape out_shape = x.shape();
    out_shape[0] = count;
    auto xv = x.values();
    std::vector<double> out(xv.begin() + begin * row, xv.begin() + (begin + count) * row);
    return make_result(std::move(out_shape), std::move(out), {x}, [x, begin, row](const TensorImpl& o) {
        auto g = detail::grad_of(x);
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * row + i] += o.grad[i];
    });
}

Tensor concat_batch(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat_batch: no inputs");
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape t(p.shape().begin() + 1, p.shape().end());
        if (t != tail) throw ArgumentError("concat_batch: trailing shapes differ");
        total += p.dim(0);
    }
    Shape out_shape = parts[0].shape();
    out_shape[0] = total;
    std::vector<double> out;
    out.reserve(shape_numel(out_shape));
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return make_result(std::move(out_shape), std::move(out), parts, [parts](const TensorImpl& o) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            auto g = detail::grad_of(p);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[offset + i];
            offset += p.numel();
        }
    });
}

namespace {

Tensor masked_ce_impl(const Tensor& p, const Tensor& target, const Tensor& mask, bool negative,
                      const char* op) {
    require_same_shape(p, target, op);
    check_mask(p, mask, op);
    auto [n, k, s] = class_layout(p, op);
    if (negative && k < 2) throw ArgumentError(std::string(op) + ": needs at least two classes");
    auto pv = p.values(), tv = target.values(), mv = mask.values();
    const double norm = negative ? 1.0 / static_cast<double>(k - 1) : 1.0;
    double count = 0.0, total = 0.0;
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < s; ++i) {
            if (mv[b * s + i] == 0.0) continue;
            count += 1.0;
            for (std::size_t c = 0; c < k; ++c) {
                const std::size_t j = (b * k + c) * s + i;
                const double t = negative ? (1.0 - tv[j]) * norm : tv[j];
                if (t == 0.0) continue;
                const double q = negative ? (1.0 - pv[j]) * norm : pv[j];
                total -= t * std::log(std::clamp(q, kProbClamp, 1.0 - kProbClamp));
            }
        }
    const double denom = std::max(count, 1.0);
    return make_result(Shape{1}, {total / denom}, {p},
                       [p, target, mask, negative, norm, denom, n = n, k = k, s = s](const TensorImpl& o) {
                           auto g = detail::grad_of(p);
                           auto pv = p.values(), tv = target.values(), mv = mask.values();
                           const double scale_g = o.grad[0] / denom;
                           for (std::size_t b = 0; b < n; ++b)
                               for (std::size_t i = 0; i < s; ++i) {
                                   if (mv[b * s + i] == 0.0) continue;
                                   for (std::size_t c = 0; c < k; ++c) {
                                       const std::size_t j = (b * k + c) * s + i;
                                       const double t = negative ? (1.0 - tv[j]) * norm : tv[j];
                                       if (t == 0.0) continue;
                                       const double q = negative ? (1.0 - pv[j]) * norm : pv[j];
                                       if (q <= kProbClamp || q >= 1.0 - kProbClamp) continue;
                                       // d/dp of -t log q, with dq/dp = -norm for the negative form.
                                       const double dq = negative ? -norm : 1.0;
                                       g[j] += scale_g * (-t / q) * dq;
                                   }
                               }
                       });
}

} // namespace

Tensor masked_cross_entropy(const Tensor& p, const Tensor& target, const Tensor& mask) {
    return masked_ce_impl(p, target, mask, false, "masked_cross_entropy");
}

Tensor masked_negative_cross_entropy(const Tensor& p, const Tensor& target, const Tensor& mask) {
    return masked_ce_impl(p, target, mask, true, "masked_negative_cross_entropy");
}

Tensor cross_entropy(const Tensor& p, const Tensor& target) {
    Shape ms = p.shape();
    if (ms.size() < 2) throw ArgumentError("cross_entropy: expected [N, C, ...]");
    ms.erase(ms.begin() + 1);
    return masked_cross_entropy(p, target, Tensor(ms, 1.0));
}

Tensor dice_loss(const Tensor& p, const Tensor& target) {
    require_same_shape(p, target, "dice_loss");
    auto pv = p.values(), tv = target.values();
    double inter = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        inter += pv[i] * tv[i];
        sp += pv[i];
        st += tv[i];
    }
    const double num = 2.0 * inter + kDiceSmooth;
    const double den = sp + st + kDiceSmooth;
    return make_result(Shape{1}, {1.0 - num / den}, {p}, [p, target, num, den](const TensorImpl& o) {
        auto g = detail::grad_of(p);
        auto tv = target.values();
        // d/dp_i [-(num/den)] = -(2 t_i den - num) / den^2
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += o.grad[0] * (-(2.0 * tv[i] * den - num) / (den * den));
    });
}

Tensor mean_squared_distance(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mean_squared_distance");
    auto [n, k, s] = class_layout(a, "mean_squared_distance");
    auto av = a.values(), bv = b.values();
    double total = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        total += d * d;
    }
    const double voxels = static_cast<double>(n * s);
    return make_result(Shape{1}, {total / voxels}, {a, b}, [a, b, voxels](const TensorImpl& o) {
        auto av = a.values(), bv = b.values();
        const double f = 2.0 * o.grad[0] / voxels;
        auto ga = detail::grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += f * (av[i] - bv[i]);
        auto gb = detail::grad_of(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= f * (av[i] - bv[i]);
    });
}

Tensor cosine_similarity_map(const Tensor& features, const Tensor& prototypes, double eps) {
    auto [n, f, s] = class_layout(features, "cosine_similarity_map");
    if (prototypes.rank() != 2 || prototypes.dim(1) != f)
        throw ArgumentError("cosine_similarity_map: prototypes " + shape_str(prototypes.shape()) +
                            " do not match feature width " + std::to_string(f));
    const std::size_t k = prototypes.dim(0);
    auto zv = features.values(), mv = prototypes.values();
    std::vector<double> mu_norm(k);
    for (std::size_t c = 0; c < k; ++c) {
        double sq = 0.0;
        for (std::size_t j = 0; j < f; ++j) sq += mv[c * f + j] * mv[c * f + j];
        mu_norm[c] = std::sqrt(sq) + eps;
    }
    std::vector<double> z_norm(n * s);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < s; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < f; ++j) {
                const double z = zv[(b * f + j) * s + i];
                sq += z * z;
            }
            z_norm[b * s + i] = std::sqrt(sq);
        }
    Shape out_shape = features.shape();
    out_shape[1] = k;
    std::vector<double> out(n * k * s);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t i = 0; i < s; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < f; ++j) dot += zv[(b * f + j) * s + i] * mv[c * f + j];
                out[(b * k + c) * s + i] = dot / ((z_norm[b * s + i] + eps) * mu_norm[c]);
            }
    return make_result(
        std::move(out_shape), std::move(out), {features},
        [features, prototypes, mu_norm, z_norm, eps, n = n, f = f, s = s, k](const TensorImpl& o) {
            auto g = detail::grad_of(features);
            auto zv = features.values(), mv = prototypes.values();
            // cos = (z . mu) / ((|z| + eps) |mu|~);  d cos/dz = mu / (a m) - (z . mu) z / (a^2 m |z|)
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < s; ++i) {
                    const double zn = z_norm[b * s + i];
                    const double a = zn + eps;
                    for (std::size_t c = 0; c < k; ++c) {
                        const double go = o.grad[(b * k + c) * s + i];
                        if (go == 0.0) continue;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < f; ++j) dot += zv[(b * f + j) * s + i] * mv[c * f + j];
                        const double m = mu_norm[c];
                        const double radial = zn > 0.0 ? dot / (a * a * m * zn) : 0.0;
                        for (std::size_t j = 0; j < f; ++j) {
                            const std::size_t idx = (b * f + j) * s + i;
                            g[idx] += go * (mv[c * f + j] / (a * m) - radial * zv[idx]);
                        }
                    }
                }
        });
}

} // namespace tcseg
