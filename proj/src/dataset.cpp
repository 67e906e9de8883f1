#include "tcseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "tcseg/errors.hpp"
#include "tcseg/hash.hpp"
#include "tcseg/ops.hpp"
#include "tcseg/volume_io.hpp"

namespace tcseg {

const char* split_name(Split s) {
    switch (s) {
    case Split::labeled: return "labeled";
    case Split::unlabeled: return "unlabeled";
    case Split::validation: return "validation";
    case Split::test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& s) {
    for (Split x : {Split::labeled, Split::unlabeled, Split::validation, Split::test})
        if (s == split_name(x)) return x;
    throw ArgumentError("unknown split '" + s + "'");
}

void SyntheticConfig::validate() const {
    if (volume_shape.size() != 3 || shape_numel(volume_shape) == 0)
        throw ArgumentError("synthetic volume_shape must be three positive extents");
    if (num_cases == 0) throw ArgumentError("synthetic num_cases must be positive");
    if (!(labeled_ratio > 0.0 && labeled_ratio < 1.0)) throw ArgumentError("labeled_ratio must lie in (0, 1)");
    if (labeled_count() == 0 || labeled_count() >= num_cases)
        throw ArgumentError("labeled_ratio leaves no labeled or no unlabeled cases");
    if (min_blobs == 0 || min_blobs > max_blobs) throw ArgumentError("blob count range is empty");
    if (!(min_radius > 0.0) || min_radius > max_radius) throw ArgumentError("blob radius range is invalid");
    if (noise_sigma < 0.0 || contrast_jitter < 0.0 || contrast_jitter >= 1.0 || bias_amplitude < 0.0 ||
        edge_blur < 0.0 || warp_amplitude < 0.0 || warp_amplitude >= 1.0)
        throw ArgumentError("synthetic intensity knobs out of range");
    if (contrast == 0.0) throw ArgumentError("synthetic contrast must be non-zero");
    for (double s : spacing)
        if (!(s > 0.0)) throw ArgumentError("synthetic spacing must be positive");
}

std::size_t SyntheticConfig::labeled_count() const {
    return static_cast<std::size_t>(std::llround(labeled_ratio * static_cast<double>(num_cases)));
}

namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

Mat3 random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    double q[4];
    double n = 0.0;
    for (double& v : q) {
        v = g(rng);
        n += v * v;
    }
    n = std::sqrt(n);
    for (double& v : q) v /= n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
             {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
             {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

struct Blob {
    Vec3 centre;
    Vec3 radius;
    Mat3 rot;
    double warp;
    int f_az, f_pol;
    double ph_az, ph_pol;

    bool contains(const Vec3& p) const {
        Vec3 d{p[0] - centre[0], p[1] - centre[1], p[2] - centre[2]};
        Vec3 local{};
        for (int i = 0; i < 3; ++i) local[i] = rot[0][i] * d[0] + rot[1][i] * d[1] + rot[2][i] * d[2];
        double rho2 = 0.0;
        for (int i = 0; i < 3; ++i) rho2 += (local[i] / radius[i]) * (local[i] / radius[i]);
        double limit = 1.0;
        if (warp > 0.0) {
            const double len = std::sqrt(local[0] * local[0] + local[1] * local[1] + local[2] * local[2]);
            if (len > 0.0) {
                const double az = std::atan2(local[1], local[0]);
                const double pol = std::acos(std::clamp(local[2] / len, -1.0, 1.0));
                limit += warp * std::sin(f_az * az + ph_az) * std::cos(f_pol * pol + ph_pol);
            }
        }
        return rho2 <= limit * limit;
    }
};

Blob random_blob(std::mt19937_64& rng, const Shape& shape, double r_lo, double r_hi, double warp) {
    const double side = static_cast<double>(*std::min_element(shape.begin(), shape.end()));
    std::uniform_real_distribution<double> radius(r_lo * side, r_hi * side);
    Blob b{};
    for (double& r : b.radius) r = radius(rng);
    const double rmax = *std::max_element(b.radius.begin(), b.radius.end());
    for (int a = 0; a < 3; ++a) {
        const double ext = static_cast<double>(shape[a]);
        const double margin = std::min(rmax, 0.5 * ext - 1.0);
        std::uniform_real_distribution<double> c(std::max(0.0, margin), std::max(0.0, ext - 1.0 - margin));
        b.centre[a] = c(rng);
    }
    b.rot = random_rotation(rng);
    b.warp = warp;
    std::uniform_int_distribution<int> f_az(2, 4), f_pol(1, 3);
    std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
    b.f_az = f_az(rng);
    b.f_pol = f_pol(rng);
    b.ph_az = ph(rng);
    b.ph_pol = ph(rng);
    return b;
}

void gaussian_blur(std::vector<double>& v, const Shape& shape, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& x : k) x /= total;
    const std::array<std::size_t, 3> stride{shape[1] * shape[2], shape[2], 1};
    std::vector<double> line;
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t n = shape[axis];
        line.resize(n);
        for (std::size_t base = 0; base < v.size(); ++base) {
            if ((base / stride[axis]) % n != 0) continue;
            for (std::size_t i = 0; i < n; ++i) line[i] = v[base + i * stride[axis]];
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int j = -radius; j <= radius; ++j) {
                    const auto src = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i) + j, 0,
                                                                static_cast<std::ptrdiff_t>(n) - 1);
                    acc += k[j + radius] * line[src];
                }
                v[base + i * stride[axis]] = acc;
            }
        }
    }
}

} // namespace

Case generate_case(const SyntheticConfig& cfg, std::size_t index, Split split) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(index), 0x7c5e9u};
    std::mt19937_64 rng(seq);
    const Shape& shape = cfg.volume_shape;
    const std::size_t n = shape_numel(shape);
    const double warp = cfg.kind == BlobKind::warped ? cfg.warp_amplitude : 0.0;

    for (std::size_t attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        std::uniform_int_distribution<std::size_t> count(cfg.min_blobs, cfg.max_blobs);
        std::vector<Blob> blobs(count(rng));
        for (auto& b : blobs) b = random_blob(rng, shape, cfg.min_radius, cfg.max_radius, warp);
        std::vector<Blob> distractors(cfg.distractors);
        for (auto& b : distractors)
            b = random_blob(rng, shape, 0.6 * cfg.distractor_radius, cfg.distractor_radius, 0.0);

        BinaryVolume label(shape);
        std::vector<double> clean(n, 0.0);
        std::uniform_real_distribution<double> jitter(1.0 - cfg.contrast_jitter, 1.0 + cfg.contrast_jitter);
        const double gap = cfg.contrast * jitter(rng);
        for (std::size_t z = 0, i = 0; z < shape[0]; ++z)
            for (std::size_t y = 0; y < shape[1]; ++y)
                for (std::size_t x = 0; x < shape[2]; ++x, ++i) {
                    const Vec3 p{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
                    bool fg = false;
                    for (const auto& b : blobs) fg = fg || b.contains(p);
                    label.set(i, fg);
                    if (fg) {
                        clean[i] = gap;
                    } else {
                        for (const auto& b : distractors)
                            if (b.contains(p)) clean[i] = gap * cfg.distractor_contrast;
                    }
                }
        const double frac = static_cast<double>(label.count()) / static_cast<double>(n);
        if (frac < 0.01 || frac > 0.30) continue;

        if (cfg.edge_blur > 0.0) gaussian_blur(clean, shape, cfg.edge_blur);
        if (cfg.bias_amplitude > 0.0) {
            std::uniform_real_distribution<double> freq(0.5, 1.0), ph(0.0, 2.0 * std::numbers::pi);
            const double fz = freq(rng), fy = freq(rng), fx = freq(rng), phase = ph(rng);
            for (std::size_t z = 0, i = 0; z < shape[0]; ++z)
                for (std::size_t y = 0; y < shape[1]; ++y)
                    for (std::size_t x = 0; x < shape[2]; ++x, ++i)
                        clean[i] += cfg.bias_amplitude *
                                    std::sin(2.0 * std::numbers::pi *
                                                 (fz * z / shape[0] + fy * y / shape[1] + fx * x / shape[2]) +
                                             phase);
        }
        std::normal_distribution<double> noise(0.0, 1.0);
        if (cfg.noise_sigma > 0.0)
            for (double& v : clean) v += cfg.noise_sigma * noise(rng);

        double mean = 0.0;
        for (double v : clean) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : clean) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(n));
        for (double& v : clean) v = (v - mean) / (sd > 0.0 ? sd : 1.0);

        Case c;
        char id[32];
        std::snprintf(id, sizeof id, "case_%03zu", index);
        c.id = id;
        c.split = split;
        Shape image_shape{1, shape[0], shape[1], shape[2]};
        c.image = Tensor(image_shape, std::move(clean));
        c.label = std::move(label);
        c.spacing = cfg.spacing;
        return c;
    }
    throw GenerationError("case " + std::to_string(index) + ": no blob layout with 1%-30% foreground after " +
                          std::to_string(cfg.max_retries + 1) + " attempts");
}

Dataset generate(const SyntheticConfig& cfg) {
    cfg.validate();
    Dataset d;
    d.config = cfg;
    const std::size_t n_lab = cfg.labeled_count();
    const std::size_t total = cfg.num_cases + cfg.num_validation + cfg.num_test;
    d.cases.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        Split s = i < n_lab ? Split::labeled
                  : i < cfg.num_cases ? Split::unlabeled
                  : i < cfg.num_cases + cfg.num_validation ? Split::validation
                                                            : Split::test;
        d.cases.push_back(generate_case(cfg, i, s));
    }
    return d;
}

std::vector<const Case*> Dataset::select(Split s) const {
    std::vector<const Case*> out;
    for (const auto& c : cases)
        if (c.split == s) out.push_back(&c);
    return out;
}

std::uint64_t Dataset::hash() const {
    Fnv1a h;
    for (const auto& c : cases) {
        h.str(c.id);
        h.u64(static_cast<std::uint64_t>(c.split));
        h.span(c.image.values());
        h.span(c.label.bits());
    }
    return h.digest();
}

TrainingView training_view(const Dataset& d) {
    TrainingView v;
    for (const auto& c : d.cases) {
        if (c.split == Split::labeled) v.labeled.push_back({&c.id, &c.image, &c.label});
        if (c.split == Split::unlabeled) v.unlabeled.push_back({&c.id, &c.image});
    }
    return v;
}

Corner random_corner(const Shape& volume, const Shape& patch, std::mt19937_64& rng) {
    if (volume.size() != 3 || patch.size() != 3) throw ArgumentError("random_corner expects 3D shapes");
    Corner c{};
    for (int a = 0; a < 3; ++a) {
        if (patch[a] == 0 || patch[a] > volume[a])
            throw ArgumentError("patch " + shape_str(patch) + " does not fit volume " + shape_str(volume));
        std::uniform_int_distribution<std::size_t> pick(0, volume[a] - patch[a]);
        c[a] = pick(rng);
    }
    return c;
}

Tensor crop(const Tensor& image, const Corner& corner, const Shape& patch) {
    if (image.rank() != 4 || patch.size() != 3) throw ArgumentError("crop expects [C, D, H, W] and a 3D patch");
    const auto& s = image.shape();
    for (int a = 0; a < 3; ++a)
        if (corner[a] + patch[a] > s[a + 1]) throw ArgumentError("crop window leaves the volume");
    const std::size_t ch = s[0];
    std::vector<double> out(ch * shape_numel(patch));
    auto v = image.values();
    std::size_t k = 0;
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t z = 0; z < patch[0]; ++z)
            for (std::size_t y = 0; y < patch[1]; ++y) {
                const std::size_t row = ((c * s[1] + corner[0] + z) * s[2] + corner[1] + y) * s[3] + corner[2];
                std::copy_n(v.begin() + row, patch[2], out.begin() + k);
                k += patch[2];
            }
    return Tensor(Shape{ch, patch[0], patch[1], patch[2]}, std::move(out));
}

BinaryVolume crop(const BinaryVolume& mask, const Corner& corner, const Shape& patch) {
    const auto& s = mask.shape();
    if (s.size() != 3 || patch.size() != 3) throw ArgumentError("crop expects a [D, H, W] mask");
    for (int a = 0; a < 3; ++a)
        if (corner[a] + patch[a] > s[a]) throw ArgumentError("crop window leaves the volume");
    BinaryVolume out(patch);
    std::size_t k = 0;
    for (std::size_t z = 0; z < patch[0]; ++z)
        for (std::size_t y = 0; y < patch[1]; ++y)
            for (std::size_t x = 0; x < patch[2]; ++x)
                out.set(k++, mask[((corner[0] + z) * s[1] + corner[1] + y) * s[2] + corner[2] + x]);
    return out;
}

Patch sample_patch(const Tensor& image, const BinaryVolume& label, const Shape& patch, std::mt19937_64& rng) {
    if (image.rank() != 4) throw ArgumentError("sample_patch expects a [C, D, H, W] image");
    Shape vol(image.shape().begin() + 1, image.shape().end());
    if (label.shape() != vol) throw ArgumentError("sample_patch: label does not match image");
    Patch p;
    p.corner = random_corner(vol, patch, rng);
    p.image = crop(image, p.corner, patch);
    p.label = crop(label, p.corner, patch);
    return p;
}

Tensor sample_patch(const Tensor& image, const Shape& patch, std::mt19937_64& rng) {
    if (image.rank() != 4) throw ArgumentError("sample_patch expects a [C, D, H, W] image");
    Shape vol(image.shape().begin() + 1, image.shape().end());
    return crop(image, random_corner(vol, patch, rng), patch);
}

std::vector<std::size_t> window_starts(std::size_t extent, std::size_t window, std::size_t stride) {
    if (window == 0 || window > extent) throw ArgumentError("window larger than volume");
    if (stride == 0) throw ArgumentError("window stride must be >= 1");
    std::vector<std::size_t> out;
    for (std::size_t s = 0;; s += stride) {
        if (s + window >= extent) {
            out.push_back(extent - window);
            break;
        }
        out.push_back(s);
    }
    return out;
}

Tensor sliding_window_infer(const Predictor& model, const Tensor& image, const Shape& window,
                            const Shape& stride, std::size_t max_batch) {
    if (image.rank() != 4 || window.size() != 3 || stride.size() != 3)
        throw ArgumentError("sliding_window_infer expects a [C, D, H, W] image and 3D window/stride");
    if (max_batch == 0) throw ArgumentError("sliding_window_infer: max_batch must be positive");
    const auto& s = image.shape();
    std::vector<Corner> corners;
    for (auto z : window_starts(s[1], window[0], stride[0]))
        for (auto y : window_starts(s[2], window[1], stride[1]))
            for (auto x : window_starts(s[3], window[2], stride[2])) corners.push_back({z, y, x});

    const std::size_t wn = shape_numel(window);
    std::size_t k = 0;
    std::vector<double> acc, cover(s[1] * s[2] * s[3], 0.0);
    for (std::size_t start = 0; start < corners.size(); start += max_batch) {
        const std::size_t b = std::min(max_batch, corners.size() - start);
        std::vector<Tensor> parts;
        for (std::size_t i = 0; i < b; ++i) {
            Tensor w = crop(image, corners[start + i], window);
            parts.push_back(Tensor(Shape{1, s[0], window[0], window[1], window[2]},
                                   std::vector<double>(w.values().begin(), w.values().end())));
        }
        Tensor batch = parts.size() == 1 ? parts[0] : concat_batch(parts);
        Tensor probs = model(batch);
        if (probs.rank() != 5 || probs.dim(0) != b || probs.numel() % (b * wn) != 0)
            throw ArgumentError("predictor returned " + shape_str(probs.shape()) + " for " + std::to_string(b) +
                                " windows");
        if (k == 0) {
            k = probs.dim(1);
            acc.assign(k * cover.size(), 0.0);
        }
        auto pv = probs.values();
        for (std::size_t i = 0; i < b; ++i) {
            const Corner& c = corners[start + i];
            for (std::size_t ch = 0; ch < k; ++ch)
                for (std::size_t z = 0; z < window[0]; ++z)
                    for (std::size_t y = 0; y < window[1]; ++y)
                        for (std::size_t x = 0; x < window[2]; ++x) {
                            const std::size_t src = (((i * k + ch) * window[0] + z) * window[1] + y) * window[2] + x;
                            const std::size_t dst = ((ch * s[1] + c[0] + z) * s[2] + c[1] + y) * s[3] + c[2] + x;
                            acc[dst] += pv[src];
                        }
            for (std::size_t z = 0; z < window[0]; ++z)
                for (std::size_t y = 0; y < window[1]; ++y)
                    for (std::size_t x = 0; x < window[2]; ++x)
                        cover[((c[0] + z) * s[2] + c[1] + y) * s[3] + c[2] + x] += 1.0;
        }
    }
    for (std::size_t ch = 0; ch < k; ++ch)
        for (std::size_t v = 0; v < cover.size(); ++v) acc[ch * cover.size() + v] /= cover[v];
    return Tensor(Shape{k, s[1], s[2], s[3]}, std::move(acc));
}

BinaryVolume foreground_mask(const Tensor& probs) {
    if (probs.rank() != 4) throw ArgumentError("foreground_mask expects [K, D, H, W]");
    const std::size_t k = probs.dim(0), n = probs.numel() / k;
    auto pv = probs.values();
    BinaryVolume out(Shape(probs.shape().begin() + 1, probs.shape().end()));
    for (std::size_t v = 0; v < n; ++v) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (pv[c * n + v] > pv[best * n + v]) best = c;
        out.set(v, best != 0);
    }
    return out;
}

void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "volumes");
    std::ofstream manifest(dir / "manifest.tsv");
    if (!manifest) throw FormatError("cannot write manifest in " + dir.string());
    manifest << "case_id\tsplit\timage\tlabel\n";
    for (const auto& c : d.cases) {
        const std::vector<double> sp(c.spacing.begin(), c.spacing.end());
        const auto img = std::filesystem::path("volumes") / (c.id + "_image.tcsv");
        const auto lab = std::filesystem::path("volumes") / (c.id + "_label.tcsv");
        const auto& s = c.image.shape();
        write_volume(dir / img, Tensor(Shape{s[1], s[2], s[3]},
                                       std::vector<double>(c.image.values().begin(), c.image.values().end())),
                     sp);
        write_volume(dir / lab, c.label, sp);
        manifest << c.id << '\t' << split_name(c.split) << '\t' << img.string() << '\t' << lab.string() << '\n';
    }
}

} // namespace tcseg
