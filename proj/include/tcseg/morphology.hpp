#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcseg/binary_volume.hpp"
#include "tcseg/reliability.hpp"
#include "tcseg/tensor.hpp"

namespace tcseg {

enum class Connectivity { face = 6, full = 26 };

// Throws ArgumentError for anything other than 6 or 26.
Connectivity connectivity_from_int(int n);

// Structuring element applied `radius` times. Masks are [D, H, W].
BinaryVolume dilate(const BinaryVolume& mask, int radius, Connectivity conn);

struct Components {
    // 0 for background, otherwise 1-based label in scan order of the first voxel.
    std::vector<std::int32_t> labels;
    // sizes[l - 1] is the voxel count of label l.
    std::vector<std::size_t> sizes;

    std::size_t count() const { return sizes.size(); }
    std::vector<std::size_t> sorted_sizes() const;
};

Components connected_components(const BinaryVolume& mask, Connectivity conn);

// Keeps the largest component; ties go to the lowest label.
BinaryVolume largest_cc(const BinaryVolume& mask, Connectivity conn);

// LCC(dilate(m_C_minus | m_C_plus_U_plus)). Batched [N, D, H, W] masks are
// handled per sample.
BinaryVolume perturbation_mask(const MaskSet& masks, int radius, Connectivity conn);

// Centered box with half the extent along each axis (1/8 of the voxels).
BinaryVolume centered_cube_mask(const Shape& spatial);

struct MixedSample {
    Tensor x;
    std::vector<std::int32_t> y;
};

// Voxelwise selection: labeled content where mask is 0, unlabeled where 1.
// Images may carry leading axes (e.g. [C, D, H, W]); the trailing axes must
// match the mask.
MixedSample cutmix(const Tensor& x_l, std::span<const std::int32_t> y_l, const Tensor& x_u,
                   std::span<const std::int32_t> y_pseudo, const BinaryVolume& mask);

} // namespace tcseg
