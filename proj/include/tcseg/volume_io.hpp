#pragma once
// TCSV1 raw volume files.
//
//   offset 0   "TCSV1"            5 bytes
//          5   dtype code         u8   (1 = float64, 2 = uint8)
//          6   ndim               u8
//          7   extents            u64 LE * ndim
//              spacing (mm)       f64 LE * ndim
//              payload            row-major, little-endian

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tcseg/binary_volume.hpp"
#include "tcseg/tensor.hpp"

namespace tcseg {

enum class VolumeDtype : std::uint8_t { float64 = 1, uint8 = 2 };

struct Volume {
    Tensor data;
    std::vector<double> spacing;
    VolumeDtype dtype = VolumeDtype::float64;
};

void write_volume(const std::filesystem::path& path, const Tensor& data, const std::vector<double>& spacing);
void write_volume(const std::filesystem::path& path, const BinaryVolume& mask, const std::vector<double>& spacing);

// Throws FormatError on bad magic, unknown dtype, truncation or trailing bytes.
Volume read_volume(const std::filesystem::path& path);
BinaryVolume read_mask(const std::filesystem::path& path, std::vector<double>* spacing = nullptr);

} // namespace tcseg
