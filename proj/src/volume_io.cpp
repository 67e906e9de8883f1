#include "tcseg/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tcseg/errors.hpp"

namespace tcseg {

static_assert(std::endian::native == std::endian::little, "volume files assume a little-endian host");

namespace {

constexpr char kMagic[5] = {'T', 'C', 'S', 'V', '1'};

template <typename T>
void put(std::string& buf, T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

std::string header(VolumeDtype dtype, const Shape& shape, const std::vector<double>& spacing) {
    if (shape.empty() || shape.size() > 255) throw ArgumentError("volume rank must be in [1, 255]");
    if (spacing.size() != shape.size())
        throw ArgumentError("volume spacing needs one entry per axis (" + std::to_string(shape.size()) + ")");
    for (double s : spacing)
        if (!(s > 0.0)) throw ArgumentError("volume spacing must be positive");
    std::string buf(kMagic, sizeof(kMagic));
    put(buf, static_cast<std::uint8_t>(dtype));
    put(buf, static_cast<std::uint8_t>(shape.size()));
    for (auto e : shape) put(buf, static_cast<std::uint64_t>(e));
    for (double s : spacing) put(buf, s);
    return buf;
}

void dump(const std::filesystem::path& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

class Cursor {
public:
    Cursor(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

    template <typename T>
    T take(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    const char* take_bytes(std::size_t n, const char* what) {
        need(n, what);
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError(name_ + ": " + msg + " at byte offset " + std::to_string(pos_));
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t offset() const { return pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (remaining() < n)
            fail(std::string("truncated ") + what + ": expected " + std::to_string(n) + " bytes, found " +
                 std::to_string(remaining()));
    }

    std::string bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

} // namespace

void write_volume(const std::filesystem::path& path, const Tensor& data, const std::vector<double>& spacing) {
    std::string buf = header(VolumeDtype::float64, data.shape(), spacing);
    auto v = data.values();
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    dump(path, buf);
}

void write_volume(const std::filesystem::path& path, const BinaryVolume& mask, const std::vector<double>& spacing) {
    std::string buf = header(VolumeDtype::uint8, mask.shape(), spacing);
    auto b = mask.bits();
    buf.append(reinterpret_cast<const char*>(b.data()), b.size());
    dump(path, buf);
}

Volume read_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    Cursor cur(std::string(std::istreambuf_iterator<char>(in), {}), path.string());

    const char* magic = cur.take_bytes(sizeof(kMagic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError(path.string() + ": bad magic at byte offset 0, expected TCSV1");
    }
    const auto code = cur.take<std::uint8_t>("dtype code");
    if (code != 1 && code != 2) cur.fail("unknown dtype code " + std::to_string(code));
    const auto ndim = cur.take<std::uint8_t>("rank");
    if (ndim == 0) cur.fail("rank 0 volume");
    Shape shape(ndim);
    for (auto& e : shape) {
        e = static_cast<std::size_t>(cur.take<std::uint64_t>("extent"));
        if (e == 0) cur.fail("zero extent");
    }
    Volume vol;
    vol.dtype = static_cast<VolumeDtype>(code);
    vol.spacing.resize(ndim);
    for (double& s : vol.spacing) {
        s = cur.take<double>("spacing");
        if (!(s > 0.0)) cur.fail("non-positive spacing");
    }
    const std::size_t n = shape_numel(shape);
    const std::size_t width = vol.dtype == VolumeDtype::float64 ? 8 : 1;
    const std::size_t expect = n * width;
    if (cur.remaining() != expect) {
        const std::string kind = cur.remaining() < expect ? "truncated payload" : "trailing bytes after payload";
        cur.fail(kind + ": expected " + std::to_string(expect) + " bytes, found " + std::to_string(cur.remaining()));
    }
    const char* payload = cur.take_bytes(expect, "payload");
    std::vector<double> values(n);
    if (vol.dtype == VolumeDtype::float64) {
        std::memcpy(values.data(), payload, expect);
    } else {
        for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<unsigned char>(payload[i]);
    }
    vol.data = Tensor(std::move(shape), std::move(values));
    return vol;
}

BinaryVolume read_mask(const std::filesystem::path& path, std::vector<double>* spacing) {
    Volume v = read_volume(path);
    if (v.dtype != VolumeDtype::uint8) throw FormatError(path.string() + ": expected a uint8 mask volume");
    std::vector<std::uint8_t> bits(v.data.numel());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        const double x = v.data.values()[i];
        if (x != 0.0 && x != 1.0) throw FormatError(path.string() + ": mask voxel " + std::to_string(i) + " is not 0/1");
        bits[i] = static_cast<std::uint8_t>(x);
    }
    if (spacing) *spacing = v.spacing;
    return BinaryVolume(v.data.shape(), std::move(bits));
}

} // namespace tcseg
