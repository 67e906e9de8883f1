#include "tcseg/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tcseg/errors.hpp"
#include "tcseg/ops.hpp"
#include "tcseg/optim.hpp"

namespace tcseg {

void NetworkConfig::validate() const {
    if (in_channels == 0) throw ArgumentError("network in_channels must be positive");
    if (num_classes < 2) throw ArgumentError("network num_classes must be >= 2");
    if (base_width == 0 || feature_dim == 0) throw ArgumentError("network widths must be positive");
    if (num_stages < 2 || num_stages > 8) throw ArgumentError("network num_stages must lie in [2, 8]");
}

std::size_t DualDecoderNet::add_param(const std::string& name, Tensor value) {
    params_.emplace_back(name, std::move(value));
    return params_.size() - 1;
}

DualDecoderNet::Conv DualDecoderNet::make_conv(const std::string& name, std::size_t co, std::size_t ci,
                                              std::size_t k, bool bias, std::mt19937_64& rng, bool transposed) {
    const std::size_t k3 = k * k * k;
    // He initialisation on the fan-in seen by each output voxel.
    const double fan_in = transposed ? static_cast<double>(ci) : static_cast<double>(ci * k3);
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / fan_in));
    Tensor w(transposed ? Shape{ci, co, k, k, k} : Shape{co, ci, k, k, k});
    for (double& v : w.mutable_values()) v = g(rng);
    Conv c;
    c.weight = add_param(name + ".weight", std::move(w));
    if (bias) c.bias = static_cast<std::ptrdiff_t>(add_param(name + ".bias", Tensor(Shape{co}, 0.0)));
    return c;
}

DualDecoderNet::Norm DualDecoderNet::make_norm(const std::string& name, std::size_t c) {
    Norm n;
    n.gamma = add_param(name + ".gamma", Tensor(Shape{c}, 1.0));
    n.beta = add_param(name + ".beta", Tensor(Shape{c}, 0.0));
    return n;
}

DualDecoderNet::Block DualDecoderNet::make_block(const std::string& name, std::size_t co, std::size_t ci,
                                                std::size_t stride, std::mt19937_64& rng) {
    Block b;
    b.conv = make_conv(name + ".conv", co, ci, 3, false, rng);
    b.norm = make_norm(name + ".norm", co);
    b.stride = stride;
    return b;
}

DualDecoderNet::DualDecoderNet(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    auto width = [&](std::size_t s) { return cfg_.base_width << s; };

    encoder_.resize(cfg_.num_stages);
    encoder_[0].push_back(make_block("enc0.0", width(0), cfg_.in_channels, 1, rng));
    for (std::size_t s = 1; s < cfg_.num_stages; ++s) {
        const std::string n = "enc" + std::to_string(s);
        encoder_[s].push_back(make_block(n + ".down", width(s), width(s - 1), 2, rng));
        encoder_[s].push_back(make_block(n + ".0", width(s), width(s), 1, rng));
    }
    for (int d = 1; d <= 2; ++d) {
        Decoder& dec = d == 1 ? dec1_ : dec2_;
        dec.transposed = d == 1;
        const std::string n = "dec" + std::to_string(d);
        for (std::size_t s = cfg_.num_stages - 1; s >= 1; --s) {
            const std::string sn = n + ".up" + std::to_string(s);
            UpStage st;
            if (dec.transposed)
                st.up = make_conv(sn + ".tconv", width(s - 1), width(s), 2, false, rng, true);
            else
                st.up = make_conv(sn + ".proj", width(s - 1), width(s), 1, false, rng);
            st.up_norm = make_norm(sn + ".norm", width(s - 1));
            st.refine = make_block(sn + ".refine", width(s - 1), width(s - 1), 1, rng);
            dec.stages.push_back(st);
        }
        dec.logits = make_conv(n + ".logits", cfg_.num_classes, width(0), 1, true, rng);
        dec.features = make_conv(n + ".features", cfg_.feature_dim, width(0), 1, true, rng);
    }
}

std::size_t DualDecoderNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

DualDecoderNet DualDecoderNet::frozen_copy() const {
    DualDecoderNet out = *this;
    for (auto& prm : out.params_) {
        prm.value = prm.value.clone();
        prm.value.set_requires_grad(false);
        prm.velocity = prm.velocity.clone();
    }
    return out;
}

Tensor DualDecoderNet::run_norm_relu(const Norm& n, const Tensor& x) const {
    return relu(group_norm(x, p(n.gamma), p(n.beta), x.dim(1)));
}

Tensor DualDecoderNet::run_block(const Block& b, const Tensor& x) const {
    return run_norm_relu(b.norm, conv3d(x, p(b.conv.weight), b.stride, Padding::same));
}

BranchOutput DualDecoderNet::run_decoder(const Decoder& d, const std::vector<Tensor>& skips) const {
    Tensor h = skips.back();
    std::size_t s = cfg_.num_stages - 1;
    for (const auto& st : d.stages) {
        Tensor up = d.transposed ? transposed_conv3d(h, p(st.up.weight), 2)
                                 : conv3d(trilinear_upsample(h, 2), p(st.up.weight), 1, Padding::same);
        h = add(run_norm_relu(st.up_norm, up), skips[s - 1]);
        h = run_block(st.refine, h);
        --s;
    }
    BranchOutput out;
    out.logits = conv3d(h, p(d.logits.weight), p(static_cast<std::size_t>(d.logits.bias)), 1, Padding::same);
    out.prob = softmax(out.logits, 1);
    out.features =
        conv3d(h, p(d.features.weight), p(static_cast<std::size_t>(d.features.bias)), 1, Padding::same);
    return out;
}

DualOutput DualDecoderNet::forward(const Tensor& x) const {
    if (x.rank() != 5 || x.dim(1) != cfg_.in_channels)
        throw ArgumentError("network input must be [N, " + std::to_string(cfg_.in_channels) + ", D, H, W], got " +
                            shape_str(x.shape()));
    const std::size_t div = cfg_.spatial_divisor();
    for (std::size_t a = 2; a < 5; ++a)
        if (x.dim(a) % div != 0)
            throw ArgumentError("spatial extents " + shape_str(x.shape()) + " must be divisible by " +
                                std::to_string(div));
    std::vector<Tensor> skips;
    Tensor h = x;
    for (const auto& stage : encoder_) {
        for (const auto& b : stage) h = run_block(b, h);
        skips.push_back(h);
    }
    return {run_decoder(dec1_, skips), run_decoder(dec2_, skips)};
}

ModelPair::ModelPair(const NetworkConfig& cfg, std::uint64_t seed)
    : student_(cfg, seed), teacher_(student_.frozen_copy()) {}

DualOutput ModelPair::teacher_forward(const Tensor& x) const {
    NoGradGuard guard;
    return teacher_.forward(x);
}

void ModelPair::update_teacher(double alpha) {
    ema_update(teacher_.parameters(), student_.parameters(), alpha);
}

namespace {

constexpr char kCheckpointMagic[5] = {'T', 'C', 'C', 'K', '1'};

template <typename T>
void put(std::string& buf, T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

void put_tensor(std::string& buf, const std::string& name, const Tensor& t) {
    put<std::uint64_t>(buf, name.size());
    buf += name;
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(buf, e);
    auto v = t.values();
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

class Reader {
public:
    Reader(const std::filesystem::path& path) : name_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open checkpoint " + name_);
        bytes_.assign(std::istreambuf_iterator<char>(in), {});
    }
    template <typename T>
    T take() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string take_string(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError(name_ + ": " + msg + " at byte offset " + std::to_string(pos_));
    }
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            fail("truncated: expected " + std::to_string(n) + " more bytes, found " +
                 std::to_string(bytes_.size() - pos_));
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string name_;
    std::string bytes_;
    std::size_t pos_ = 0;
};

NetworkConfig read_header(Reader& r) {
    if (r.take_string(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic)))
        throw FormatError("bad checkpoint magic, expected TCCK1 at byte offset 0");
    NetworkConfig cfg;
    cfg.in_channels = r.take<std::uint64_t>();
    cfg.num_classes = r.take<std::uint64_t>();
    cfg.base_width = r.take<std::uint64_t>();
    cfg.num_stages = r.take<std::uint64_t>();
    cfg.feature_dim = r.take<std::uint64_t>();
    return cfg;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelPair& model, std::uint64_t iteration) {
    const NetworkConfig& cfg = model.config();
    std::string buf(kCheckpointMagic, sizeof(kCheckpointMagic));
    for (auto v : {cfg.in_channels, cfg.num_classes, cfg.base_width, cfg.num_stages, cfg.feature_dim})
        put<std::uint64_t>(buf, v);
    put<std::uint64_t>(buf, iteration);
    const auto& sp = model.student().parameters();
    const auto& tp = model.teacher().parameters();
    put<std::uint64_t>(buf, 3 * sp.size());
    for (const auto& p : sp) put_tensor(buf, "student." + p.name, p.value);
    for (const auto& p : sp) put_tensor(buf, "momentum." + p.name, p.velocity);
    for (const auto& p : tp) put_tensor(buf, "teacher." + p.name, p.value);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed for checkpoint " + path.string());
}

NetworkConfig read_checkpoint_config(const std::filesystem::path& path) {
    Reader r(path);
    return read_header(r);
}

std::uint64_t load_checkpoint(const std::filesystem::path& path, ModelPair& model) {
    Reader r(path);
    const NetworkConfig cfg = read_header(r);
    if (!(cfg == model.config())) r.fail("network configuration differs from the target model");
    const auto iteration = r.take<std::uint64_t>();
    auto& sp = model.student().parameters();
    auto& tp = model.teacher().parameters();
    const auto count = r.take<std::uint64_t>();
    if (count != 3 * sp.size()) r.fail("expected " + std::to_string(3 * sp.size()) + " tensors, found " +
                                       std::to_string(count));
    auto read_into = [&](const std::string& expect_name, Tensor& dst) {
        const auto len = r.take<std::uint64_t>();
        const std::string name = r.take_string(len);
        if (name != expect_name) r.fail("expected tensor '" + expect_name + "', found '" + name + "'");
        const auto rank = r.take<std::uint8_t>();
        Shape shape(rank);
        for (auto& e : shape) e = r.take<std::uint64_t>();
        if (shape != dst.shape()) r.fail("shape mismatch for " + name + ": " + shape_str(shape) + " vs " +
                                         shape_str(dst.shape()));
        r.need(dst.numel() * sizeof(double));
        const std::string raw = r.take_string(dst.numel() * sizeof(double));
        std::memcpy(dst.mutable_values().data(), raw.data(), raw.size());
    };
    for (auto& p : sp) read_into("student." + p.name, p.value);
    for (auto& p : sp) read_into("momentum." + p.name, p.velocity);
    for (auto& p : tp) read_into("teacher." + p.name, p.value);
    if (!r.done()) r.fail("trailing bytes after last tensor");
    return iteration;
}

} // namespace tcseg
