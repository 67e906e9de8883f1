#include "tcseg/binary_volume.hpp"

#include <algorithm>

#include "tcseg/errors.hpp"

namespace tcseg {

BinaryVolume::BinaryVolume(Shape shape, bool fill)
    : shape_(std::move(shape)), bits_(shape_numel(shape_), fill ? 1 : 0) {}

BinaryVolume::BinaryVolume(Shape shape, std::vector<std::uint8_t> bits)
    : shape_(std::move(shape)), bits_(std::move(bits)) {
    if (bits_.size() != shape_numel(shape_))
        throw ArgumentError("binary volume shape " + shape_str(shape_) + " does not match " +
                            std::to_string(bits_.size()) + " voxels");
    for (std::uint8_t b : bits_)
        if (b > 1) throw ArgumentError("binary volume values must be 0 or 1");
}

BinaryVolume BinaryVolume::from_tensor(const Tensor& t, double threshold) {
    std::vector<std::uint8_t> bits(t.numel());
    auto v = t.values();
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = v[i] > threshold ? 1 : 0;
    return BinaryVolume(t.shape(), std::move(bits));
}

std::size_t BinaryVolume::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryVolume BinaryVolume::sample(std::size_t n) const {
    if (shape_.size() < 2 || n >= shape_[0])
        throw ArgumentError("binary volume sample index out of range for " + shape_str(shape_));
    Shape inner(shape_.begin() + 1, shape_.end());
    const std::size_t m = shape_numel(inner);
    return BinaryVolume(inner, std::vector<std::uint8_t>(bits_.begin() + n * m, bits_.begin() + (n + 1) * m));
}

BinaryVolume BinaryVolume::stack(const std::vector<BinaryVolume>& parts) {
    if (parts.empty()) throw ArgumentError("stack of zero binary volumes");
    Shape shape = parts[0].shape();
    std::vector<std::uint8_t> bits;
    for (const auto& p : parts) {
        if (p.shape() != shape) throw ArgumentError("stack: binary volume shapes differ");
        bits.insert(bits.end(), p.bits_.begin(), p.bits_.end());
    }
    shape.insert(shape.begin(), parts.size());
    return BinaryVolume(std::move(shape), std::move(bits));
}

Tensor BinaryVolume::to_tensor() const {
    std::vector<double> v(bits_.begin(), bits_.end());
    return Tensor(shape_, std::move(v));
}

namespace {
void require_same(const BinaryVolume& a, const BinaryVolume& b) {
    if (a.shape() != b.shape())
        throw ArgumentError("binary volume shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
}
} // namespace

BinaryVolume BinaryVolume::operator|(const BinaryVolume& o) const {
    require_same(*this, o);
    BinaryVolume r = *this;
    for (std::size_t i = 0; i < bits_.size(); ++i) r.bits_[i] = bits_[i] | o.bits_[i];
    return r;
}

BinaryVolume BinaryVolume::operator&(const BinaryVolume& o) const {
    require_same(*this, o);
    BinaryVolume r = *this;
    for (std::size_t i = 0; i < bits_.size(); ++i) r.bits_[i] = bits_[i] & o.bits_[i];
    return r;
}

BinaryVolume BinaryVolume::operator~() const {
    BinaryVolume r = *this;
    for (auto& b : r.bits_) b ^= 1;
    return r;
}

bool BinaryVolume::subset_of(const BinaryVolume& o) const {
    require_same(*this, o);
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i] && !o.bits_[i]) return false;
    return true;
}

} // namespace tcseg
