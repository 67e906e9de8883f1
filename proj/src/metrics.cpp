#include "tcseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tcseg/errors.hpp"

namespace tcseg {

namespace {

void require_same(const BinaryVolume& a, const BinaryVolume& b, const char* op) {
    if (a.shape() != b.shape())
        throw ArgumentError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
}

void require_3d(const BinaryVolume& m, const char* op) {
    if (m.shape().size() != 3) throw ArgumentError(std::string(op) + ": expected a [D, H, W] mask");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line,
// with sample positions i * step. f is read and overwritten in place.
void edt_1d(std::vector<double>& f, double step, std::vector<double>& d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
    const std::size_t n = f.size();
    d.resize(n);
    v.resize(n);
    z.resize(n + 1);
    std::size_t k = 0;
    std::size_t first = 0;
    while (first < n && f[first] == kInf) ++first;
    if (first == n) return;
    v[0] = first;
    z[0] = -kInf;
    z[1] = kInf;
    auto pos = [step](std::size_t i) { return static_cast<double>(i) * step; };
    for (std::size_t q = first + 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s;
        while (true) {
            const std::size_t p = v[k];
            s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[k + 1] < pos(q)) ++k;
        const double dx = pos(q) - pos(v[k]);
        d[q] = dx * dx + f[v[k]];
    }
    f.swap(d);
}

} // namespace

double dsc(const BinaryVolume& pred, const BinaryVolume& ref) {
    require_same(pred, ref, "dsc");
    std::size_t a = 0, b = 0, both = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        a += pred[i];
        b += ref[i];
        both += pred[i] && ref[i];
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

BinaryVolume surface_voxels(const BinaryVolume& mask) {
    require_3d(mask, "surface_voxels");
    const std::size_t d = mask.shape()[0], h = mask.shape()[1], w = mask.shape()[2];
    BinaryVolume out(mask.shape());
    auto on = [&](std::size_t z, std::size_t y, std::size_t x) { return mask[(z * h + y) * w + x]; };
    for (std::size_t z = 0; z < d; ++z)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                if (!on(z, y, x)) continue;
                const bool border = z == 0 || y == 0 || x == 0 || z + 1 == d || y + 1 == h || x + 1 == w;
                const bool edge = border || !on(z - 1, y, x) || !on(z + 1, y, x) || !on(z, y - 1, x) ||
                                  !on(z, y + 1, x) || !on(z, y, x - 1) || !on(z, y, x + 1);
                out.set((z * h + y) * w + x, edge);
            }
    return out;
}

std::vector<double> squared_distance_transform(const BinaryVolume& sites, const Spacing& spacing) {
    require_3d(sites, "squared_distance_transform");
    const std::array<std::size_t, 3> ext{sites.shape()[0], sites.shape()[1], sites.shape()[2]};
    const std::array<std::size_t, 3> stride{ext[1] * ext[2], ext[2], 1};
    std::vector<double> g(sites.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = sites[i] ? 0.0 : kInf;
    std::vector<double> line, d, z;
    std::vector<std::size_t> v;
    for (int axis = 2; axis >= 0; --axis) {
        const std::size_t n = ext[axis];
        line.resize(n);
        for (std::size_t base = 0; base < g.size(); ++base) {
            // Visit each line once, from its first element.
            if ((base / stride[axis]) % n != 0) continue;
            for (std::size_t i = 0; i < n; ++i) line[i] = g[base + i * stride[axis]];
            edt_1d(line, spacing[axis], d, v, z);
            for (std::size_t i = 0; i < n; ++i) g[base + i * stride[axis]] = line[i];
        }
    }
    return g;
}

SurfaceDistances surface_distances(const BinaryVolume& pred, const BinaryVolume& ref, const Spacing& spacing) {
    require_same(pred, ref, "surface_distances");
    require_3d(pred, "surface_distances");
    if (pred.empty_set() || ref.empty_set())
        throw UndefinedMetricError("surface distance is undefined when a mask is empty");
    const BinaryVolume sp = surface_voxels(pred), sr = surface_voxels(ref);
    const auto to_ref = squared_distance_transform(sr, spacing);
    const auto to_pred = squared_distance_transform(sp, spacing);
    SurfaceDistances out;
    for (std::size_t i = 0; i < sp.size(); ++i) {
        if (sp[i]) out.pred_to_ref.push_back(std::sqrt(to_ref[i]));
        if (sr[i]) out.ref_to_pred.push_back(std::sqrt(to_pred[i]));
    }
    return out;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw UndefinedMetricError("percentile of an empty set");
    if (p < 0.0 || p > 100.0) throw ArgumentError("percentile must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {
std::vector<double> union_of(const SurfaceDistances& d) {
    std::vector<double> all = d.pred_to_ref;
    all.insert(all.end(), d.ref_to_pred.begin(), d.ref_to_pred.end());
    if (all.empty()) throw UndefinedMetricError("no surface distances");
    return all;
}
} // namespace

double asd(const SurfaceDistances& d) {
    const auto all = union_of(d);
    return std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
}

double hd95(const SurfaceDistances& d) { return percentile(union_of(d), 95.0); }

SegScore score(const BinaryVolume& pred, const BinaryVolume& ref, const Spacing& spacing) {
    SegScore s;
    s.spacing = spacing;
    s.dsc = dsc(pred, ref);
    if (!pred.empty_set() && !ref.empty_set()) {
        const auto d = surface_distances(pred, ref, spacing);
        s.asd_mm = asd(d);
        s.hd95_mm = hd95(d);
    }
    return s;
}

AuditScore audit_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
    AuditScore a;
    a.tp = tp;
    a.fp = fp;
    a.tn = tn;
    a.fn = fn;
    auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    a.ppv = ratio(tp, tp + fp);
    a.npv = ratio(tn, tn + fn);
    a.recall = ratio(tp, tp + fn);
    return a;
}

AuditScore& AuditScore::operator+=(const AuditScore& o) {
    *this = audit_from_counts(tp + o.tp, fp + o.fp, tn + o.tn, fn + o.fn);
    return *this;
}

AuditScore audit(const BinaryVolume& pseudo, const BinaryVolume& ref) {
    require_same(pseudo, ref, "audit");
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
        const bool p = pseudo[i], r = ref[i];
        tp += p && r;
        fp += p && !r;
        tn += !p && !r;
        fn += !p && r;
    }
    return audit_from_counts(tp, fp, tn, fn);
}

} // namespace tcseg
