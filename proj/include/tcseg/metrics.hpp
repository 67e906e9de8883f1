#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "tcseg/binary_volume.hpp"

namespace tcseg {

using Spacing = std::array<double, 3>;

// 2|A & B| / (|A| + |B|); 1 when both are empty.
double dsc(const BinaryVolume& pred, const BinaryVolume& ref);

struct SurfaceDistances {
    std::vector<double> pred_to_ref;
    std::vector<double> ref_to_pred;
};

// On-voxels with an off face-neighbour or touching the volume boundary.
BinaryVolume surface_voxels(const BinaryVolume& mask);

// Squared Euclidean distance (mm^2) from every voxel centre to the nearest
// on-voxel of `sites`. Infinity everywhere if `sites` is empty.
std::vector<double> squared_distance_transform(const BinaryVolume& sites, const Spacing& spacing);

// Throws UndefinedMetricError if either mask is empty.
SurfaceDistances surface_distances(const BinaryVolume& pred, const BinaryVolume& ref, const Spacing& spacing);

// Percentile in [0, 100] with linear interpolation at rank p/100 * (n - 1).
double percentile(std::vector<double> values, double p);

// Both over the union of the two directed multisets.
double asd(const SurfaceDistances& d);
double hd95(const SurfaceDistances& d);

struct SegScore {
    double dsc = 0.0;
    std::optional<double> asd_mm;
    std::optional<double> hd95_mm;
    Spacing spacing{1.0, 1.0, 1.0};
};

SegScore score(const BinaryVolume& pred, const BinaryVolume& ref, const Spacing& spacing);

struct AuditScore {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::optional<double> ppv, npv, recall;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    // Adds counts and recomputes the ratios.
    AuditScore& operator+=(const AuditScore& o);
};

AuditScore audit(const BinaryVolume& pseudo, const BinaryVolume& ref);
AuditScore audit_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn);

} // namespace tcseg
