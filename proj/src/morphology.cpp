#include "tcseg/morphology.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "tcseg/errors.hpp"

namespace tcseg {

namespace {

struct Grid {
    std::size_t d, h, w;
    explicit Grid(const BinaryVolume& m) {
        if (m.shape().size() != 3)
            throw ArgumentError("morphology expects a [D, H, W] mask, got " + shape_str(m.shape()));
        d = m.shape()[0];
        h = m.shape()[1];
        w = m.shape()[2];
    }
};

std::vector<std::array<int, 3>> neighbourhood(Connectivity conn) {
    std::vector<std::array<int, 3>> out;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int l1 = std::abs(dz) + std::abs(dy) + std::abs(dx);
                if (l1 == 0) continue;
                if (conn == Connectivity::face && l1 != 1) continue;
                out.push_back({dz, dy, dx});
            }
    return out;
}

BinaryVolume dilate_once(const BinaryVolume& in, const Grid& g, const std::vector<std::array<int, 3>>& nb) {
    BinaryVolume out = in;
    for (std::size_t z = 0; z < g.d; ++z)
        for (std::size_t y = 0; y < g.h; ++y)
            for (std::size_t x = 0; x < g.w; ++x) {
                if (!in[(z * g.h + y) * g.w + x]) continue;
                for (const auto& o : nb) {
                    const auto zz = static_cast<std::ptrdiff_t>(z) + o[0];
                    const auto yy = static_cast<std::ptrdiff_t>(y) + o[1];
                    const auto xx = static_cast<std::ptrdiff_t>(x) + o[2];
                    if (zz < 0 || yy < 0 || xx < 0 || zz >= static_cast<std::ptrdiff_t>(g.d) ||
                        yy >= static_cast<std::ptrdiff_t>(g.h) || xx >= static_cast<std::ptrdiff_t>(g.w))
                        continue;
                    out.set((zz * g.h + yy) * g.w + xx, true);
                }
            }
    return out;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
    while (parent[i] != i) {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    return i;
}

BinaryVolume per_sample(const BinaryVolume& mask, const auto& fn) {
    if (mask.shape().size() == 3) return fn(mask);
    if (mask.shape().size() != 4) throw ArgumentError("expected [D, H, W] or [N, D, H, W] mask");
    std::vector<BinaryVolume> parts;
    for (std::size_t n = 0; n < mask.shape()[0]; ++n) parts.push_back(fn(mask.sample(n)));
    return BinaryVolume::stack(parts);
}

} // namespace

Connectivity connectivity_from_int(int n) {
    if (n == 6) return Connectivity::face;
    if (n == 26) return Connectivity::full;
    throw ArgumentError("connectivity must be 6 or 26, got " + std::to_string(n));
}

BinaryVolume dilate(const BinaryVolume& mask, int radius, Connectivity conn) {
    if (radius < 1) throw ArgumentError("dilate: radius must be >= 1, got " + std::to_string(radius));
    Grid g(mask);
    const auto nb = neighbourhood(conn);
    BinaryVolume out = mask;
    for (int r = 0; r < radius; ++r) out = dilate_once(out, g, nb);
    return out;
}

std::vector<std::size_t> Components::sorted_sizes() const {
    std::vector<std::size_t> s = sizes;
    std::sort(s.begin(), s.end(), std::greater<>());
    return s;
}

Components connected_components(const BinaryVolume& mask, Connectivity conn) {
    Grid g(mask);
    const std::size_t n = mask.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    // Only neighbours earlier in scan order need to be visited.
    std::vector<std::array<int, 3>> back;
    for (const auto& o : neighbourhood(conn))
        if (o[0] < 0 || (o[0] == 0 && (o[1] < 0 || (o[1] == 0 && o[2] < 0)))) back.push_back(o);
    for (std::size_t z = 0; z < g.d; ++z)
        for (std::size_t y = 0; y < g.h; ++y)
            for (std::size_t x = 0; x < g.w; ++x) {
                const std::size_t i = (z * g.h + y) * g.w + x;
                if (!mask[i]) continue;
                for (const auto& o : back) {
                    const auto zz = static_cast<std::ptrdiff_t>(z) + o[0];
                    const auto yy = static_cast<std::ptrdiff_t>(y) + o[1];
                    const auto xx = static_cast<std::ptrdiff_t>(x) + o[2];
                    if (zz < 0 || yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(g.h) ||
                        xx >= static_cast<std::ptrdiff_t>(g.w))
                        continue;
                    const std::size_t j = (zz * g.h + yy) * g.w + xx;
                    if (!mask[j]) continue;
                    const std::size_t a = find_root(parent, i), b = find_root(parent, j);
                    if (a != b) parent[std::max(a, b)] = std::min(a, b);
                }
            }
    Components out;
    out.labels.assign(n, 0);
    std::vector<std::int32_t> root_label(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const std::size_t r = find_root(parent, i);
        if (root_label[r] == 0) {
            out.sizes.push_back(0);
            root_label[r] = static_cast<std::int32_t>(out.sizes.size());
        }
        out.labels[i] = root_label[r];
        ++out.sizes[root_label[r] - 1];
    }
    return out;
}

BinaryVolume largest_cc(const BinaryVolume& mask, Connectivity conn) {
    Components cc = connected_components(mask, conn);
    BinaryVolume out(mask.shape());
    if (cc.count() == 0) return out;
    std::size_t best = 0;
    for (std::size_t l = 1; l < cc.sizes.size(); ++l)
        if (cc.sizes[l] > cc.sizes[best]) best = l;
    const auto keep = static_cast<std::int32_t>(best + 1);
    for (std::size_t i = 0; i < out.size(); ++i) out.set(i, cc.labels[i] == keep);
    return out;
}

BinaryVolume perturbation_mask(const MaskSet& masks, int radius, Connectivity conn) {
    const BinaryVolume source = masks.m_C_minus | masks.m_C_plus_U_plus;
    return per_sample(source, [&](const BinaryVolume& m) { return largest_cc(dilate(m, radius, conn), conn); });
}

BinaryVolume centered_cube_mask(const Shape& spatial) {
    if (spatial.size() != 3) throw ArgumentError("centered_cube_mask expects [D, H, W]");
    BinaryVolume out(spatial);
    std::array<std::size_t, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
        const std::size_t ext = std::max<std::size_t>(1, spatial[a] / 2);
        lo[a] = (spatial[a] - ext) / 2;
        hi[a] = lo[a] + ext;
    }
    for (std::size_t z = lo[0]; z < hi[0]; ++z)
        for (std::size_t y = lo[1]; y < hi[1]; ++y)
            for (std::size_t x = lo[2]; x < hi[2]; ++x) out.set((z * spatial[1] + y) * spatial[2] + x, true);
    return out;
}

MixedSample cutmix(const Tensor& x_l, std::span<const std::int32_t> y_l, const Tensor& x_u,
                   std::span<const std::int32_t> y_pseudo, const BinaryVolume& mask) {
    if (x_l.shape() != x_u.shape())
        throw ArgumentError("cutmix: image shapes differ " + shape_str(x_l.shape()) + " vs " + shape_str(x_u.shape()));
    const Shape& ms = mask.shape();
    if (x_l.rank() < ms.size() || !std::equal(ms.rbegin(), ms.rend(), x_l.shape().rbegin()))
        throw ArgumentError("cutmix: mask " + shape_str(ms) + " does not match image " + shape_str(x_l.shape()));
    if (y_l.size() != mask.size() || y_pseudo.size() != mask.size())
        throw ArgumentError("cutmix: label volumes do not match the mask");
    const std::size_t m = mask.size(), lead = x_l.numel() / m;
    auto lv = x_l.values(), uv = x_u.values();
    std::vector<double> x(x_l.numel());
    for (std::size_t c = 0; c < lead; ++c)
        for (std::size_t i = 0; i < m; ++i) x[c * m + i] = mask[i] ? uv[c * m + i] : lv[c * m + i];
    std::vector<std::int32_t> y(m);
    for (std::size_t i = 0; i < m; ++i) y[i] = mask[i] ? y_pseudo[i] : y_l[i];
    return {Tensor(x_l.shape(), std::move(x)), std::move(y)};
}

} // namespace tcseg
