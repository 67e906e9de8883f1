#pragma once
// Brute-force references for morphology and surface distances (test-only).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <vector>

#include "tcseg/metrics.hpp"
#include "tcseg/morphology.hpp"

namespace tcseg::testing {

inline std::size_t at(const Shape& s, std::size_t z, std::size_t y, std::size_t x) { return (z * s[1] + y) * s[2] + x; }

inline bool adjacent(std::array<long, 3> a, std::array<long, 3> b, Connectivity conn) {
    long l1 = 0, linf = 0;
    for (int i = 0; i < 3; ++i) {
        l1 += std::labs(a[i] - b[i]);
        linf = std::max(linf, std::labs(a[i] - b[i]));
    }
    return conn == Connectivity::face ? l1 == 1 : linf == 1;
}

inline std::array<long, 3> coord(const Shape& s, std::size_t i) {
    return {static_cast<long>(i / (s[1] * s[2])), static_cast<long>((i / s[2]) % s[1]), static_cast<long>(i % s[2])};
}

// Flood fill over all voxel pairs; labels follow scan order of the seed.
inline std::vector<std::int32_t> bfs_labels(const BinaryVolume& m, Connectivity conn) {
    const Shape& s = m.shape();
    std::vector<std::int32_t> lab(m.size(), 0);
    std::int32_t next = 0;
    for (std::size_t seed = 0; seed < m.size(); ++seed) {
        if (!m[seed] || lab[seed]) continue;
        lab[seed] = ++next;
        std::deque<std::size_t> q{seed};
        while (!q.empty()) {
            std::size_t cur = q.front();
            q.pop_front();
            for (std::size_t j = 0; j < m.size(); ++j)
                if (m[j] && !lab[j] && adjacent(coord(s, cur), coord(s, j), conn)) {
                    lab[j] = next;
                    q.push_back(j);
                }
        }
    }
    return lab;
}

// On iff some input voxel lies within the iterated structuring element (an L1 or Chebyshev ball).
inline BinaryVolume brute_dilate(const BinaryVolume& m, int r, Connectivity conn) {
    const Shape& s = m.shape();
    BinaryVolume out(s);
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m.size() && !out[i]; ++j) {
            if (!m[j]) continue;
            auto a = coord(s, i), b = coord(s, j);
            long l1 = 0, linf = 0;
            for (int k = 0; k < 3; ++k) {
                l1 += std::labs(a[k] - b[k]);
                linf = std::max(linf, std::labs(a[k] - b[k]));
            }
            if ((conn == Connectivity::face ? l1 : linf) <= r) out.set(i, true);
        }
    return out;
}

// Surface by explicit neighbour probing, distances by scanning every pair.
inline std::vector<std::array<double, 3>> oracle_surface(const BinaryVolume& m, const Spacing& sp) {
    const Shape& s = m.shape();
    std::vector<std::array<double, 3>> pts;
    const long d = static_cast<long>(s[0]), h = static_cast<long>(s[1]), w = static_cast<long>(s[2]);
    for (long z = 0; z < d; ++z)
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) {
                if (!m[at(s, z, y, x)]) continue;
                bool edge = false;
                const long off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
                for (const auto& o : off) {
                    const long zz = z + o[0], yy = y + o[1], xx = x + o[2];
                    if (zz < 0 || yy < 0 || xx < 0 || zz >= d || yy >= h || xx >= w || !m[at(s, zz, yy, xx)])
                        edge = true;
                }
                if (edge) pts.push_back({z * sp[0], y * sp[1], x * sp[2]});
            }
    return pts;
}

inline std::vector<double> oracle_directed(const std::vector<std::array<double, 3>>& a,
                                    const std::vector<std::array<double, 3>>& b) {
    std::vector<double> out;
    for (const auto& p : a) {
        double best = INFINITY;
        for (const auto& q : b) {
            const double dz = p[0] - q[0], dy = p[1] - q[1], dx = p[2] - q[2];
            best = std::min(best, std::sqrt(dz * dz + dy * dy + dx * dx));
        }
        out.push_back(best);
    }
    return out;
}

inline double oracle_percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double r = p * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(r);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] * (1.0 - (r - lo)) + v[lo + 1] * (r - lo);
}

} // namespace tcseg::testing
