#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcseg/tensor.hpp"

namespace tcseg {

// Dense binary mask, one byte per voxel, row-major. Morphology and metrics
// expect rank 3 ([D, H, W]); batched masks use [N, D, H, W].
class BinaryVolume {
public:
    BinaryVolume() = default;
    explicit BinaryVolume(Shape shape, bool fill = false);
    BinaryVolume(Shape shape, std::vector<std::uint8_t> bits);

    // Voxels with value > threshold are on.
    static BinaryVolume from_tensor(const Tensor& t, double threshold = 0.5);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return bits_.size(); }
    std::size_t count() const;
    bool empty_set() const { return count() == 0; }

    bool operator[](std::size_t i) const { return bits_[i] != 0; }
    void set(std::size_t i, bool on) { bits_[i] = on ? 1 : 0; }
    std::span<const std::uint8_t> bits() const { return bits_; }

    // Sample n of a batched mask, as a mask with the leading axis removed.
    BinaryVolume sample(std::size_t n) const;
    // Inverse of sample(): stacks equally shaped masks along a new leading axis.
    static BinaryVolume stack(const std::vector<BinaryVolume>& parts);

    Tensor to_tensor() const;

    BinaryVolume operator|(const BinaryVolume& o) const;
    BinaryVolume operator&(const BinaryVolume& o) const;
    BinaryVolume operator~() const;
    bool subset_of(const BinaryVolume& o) const;

    friend bool operator==(const BinaryVolume&, const BinaryVolume&) = default;

private:
    Shape shape_;
    std::vector<std::uint8_t> bits_;
};

} // namespace tcseg
