#include "tcseg/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tcseg/errors.hpp"

namespace tcseg {

using nlohmann::json;

void TrainConfig::validate() const {
    network.validate();
    data.validate();
    effective_reliability().validate();
    if (name.empty()) throw ArgumentError("config name must not be empty");
    if (patch.size() != 3 || window.size() != 3 || stride.size() != 3)
        throw ArgumentError("patch, window and stride must have three entries");
    for (int a = 0; a < 3; ++a) {
        if (patch[a] == 0 || patch[a] > data.volume_shape[a]) throw ArgumentError("patch does not fit the volume");
        if (window[a] == 0 || window[a] > data.volume_shape[a]) throw ArgumentError("window does not fit the volume");
        if (stride[a] == 0) throw ArgumentError("window stride must be >= 1");
        if (patch[a] % network.spatial_divisor() != 0 || window[a] % network.spatial_divisor() != 0)
            throw ArgumentError("patch and window extents must be divisible by " +
                                std::to_string(network.spatial_divisor()));
    }
    if (iterations == 0) throw ArgumentError("iterations must be positive");
    if (eval_every == 0) throw ArgumentError("eval_every must be positive");
    if (labeled_batch != 2 || unlabeled_batch != 2)
        throw ArgumentError("batch composition is fixed at 2 labeled + 2 unlabeled");
    if (!(lr > 0.0) || momentum < 0.0 || momentum >= 1.0 || weight_decay < 0.0)
        throw ArgumentError("optimiser settings out of range");
    if (ema_alpha < 0.0 || ema_alpha > 1.0) throw ArgumentError("ema_alpha must lie in [0, 1]");
    if (morphology.dilation_radius < 1) throw ArgumentError("dilation_radius must be >= 1");
    connectivity_from_int(morphology.connectivity);
    if (seeds.empty()) throw ArgumentError("seed list must not be empty");
    if (eval_batch == 0) throw ArgumentError("eval_batch must be positive");
    if (network.in_channels != 1) throw ArgumentError("synthetic data has one channel; network.in_channels must be 1");
    if (network.num_classes != 2) throw ArgumentError("synthetic data is binary; network.num_classes must be 2");
}

ReliabilityConfig TrainConfig::effective_reliability() const {
    ReliabilityConfig r = reliability;
    if (ablation.disable_U) r.use_uncertainty = false;
    if (ablation.disable_C) r.use_confidence = false;
    return r;
}

double TrainConfig::unsup_weight(std::size_t iteration) const {
    if (unsup_rampup == 0 || iteration >= unsup_rampup) return 1.0;
    return static_cast<double>(iteration) / static_cast<double>(unsup_rampup);
}

TrainConfig preset(const std::string& name) {
    TrainConfig c;
    if (name == "desk") return c;
    if (name == "large") {
        c.network.num_stages = 5;
        c.network.base_width = 16;
        c.data.volume_shape = {112, 112, 80};
        c.patch = {112, 112, 80};
        c.window = {112, 112, 80};
        c.stride = {16, 16, 16};
        c.iterations = 20000;
        c.eval_every = 200;
        return c;
    }
    throw ArgumentError("unknown preset '" + name + "' (expected desk or large)");
}

namespace {

json shape_json(const Shape& s) { return json(std::vector<std::size_t>(s.begin(), s.end())); }

const char* blob_name(BlobKind k) { return k == BlobKind::warped ? "warped" : "ellipsoid"; }

json to_json_obj(const TrainConfig& c) {
    json j;
    j["name"] = c.name;
    j["seeds"] = c.seeds;
    j["network"] = {{"in_channels", c.network.in_channels}, {"num_classes", c.network.num_classes},
                    {"base_width", c.network.base_width}, {"num_stages", c.network.num_stages},
                    {"feature_dim", c.network.feature_dim}};
    const auto& d = c.data;
    j["data"] = {{"volume_shape", shape_json(d.volume_shape)},
                 {"num_cases", d.num_cases},
                 {"num_validation", d.num_validation},
                 {"num_test", d.num_test},
                 {"labeled_ratio", d.labeled_ratio},
                 {"min_blobs", d.min_blobs},
                 {"max_blobs", d.max_blobs},
                 {"blob_kind", blob_name(d.kind)},
                 {"min_radius", d.min_radius},
                 {"max_radius", d.max_radius},
                 {"warp_amplitude", d.warp_amplitude},
                 {"noise_sigma", d.noise_sigma},
                 {"contrast", d.contrast},
                 {"contrast_jitter", d.contrast_jitter},
                 {"bias_amplitude", d.bias_amplitude},
                 {"distractors", d.distractors},
                 {"distractor_contrast", d.distractor_contrast},
                 {"distractor_radius", d.distractor_radius},
                 {"edge_blur", d.edge_blur},
                 {"spacing", std::vector<double>(d.spacing.begin(), d.spacing.end())},
                 {"seed", d.seed},
                 {"max_retries", d.max_retries}};
    j["train"] = {{"patch", shape_json(c.patch)},
                  {"window", shape_json(c.window)},
                  {"stride", shape_json(c.stride)},
                  {"iterations", c.iterations},
                  {"eval_every", c.eval_every},
                  {"audit_every", c.audit_every},
                  {"labeled_batch", c.labeled_batch},
                  {"unlabeled_batch", c.unlabeled_batch},
                  {"lr", c.lr},
                  {"momentum", c.momentum},
                  {"weight_decay", c.weight_decay},
                  {"ema_alpha", c.ema_alpha},
                  {"unsup_rampup", c.unsup_rampup},
                  {"pseudo_mode", c.pseudo_mode == PseudoMode::cross_branch ? "cross_branch" : "self_branch"},
                  {"eval_batch", c.eval_batch},
                  {"save_checkpoints", c.save_checkpoints}};
    const auto& r = c.reliability;
    j["reliability"] = {{"tau_min", r.tau_min},     {"tau_max", r.tau_max},
                        {"tau", r.tau},             {"epsilon", r.epsilon},
                        {"proto_temperature", r.proto_temperature}};
    j["morphology"] = {{"dilation_radius", c.morphology.dilation_radius},
                       {"connectivity", c.morphology.connectivity},
                       {"fallback_cube", c.morphology.fallback_cube}};
    const auto& a = c.ablation;
    j["ablation"] = {{"disable_U", a.disable_U},
                     {"disable_C", a.disable_C},
                     {"disable_prob_space", a.disable_prob_space},
                     {"disable_feat_space", a.disable_feat_space},
                     {"disable_img_space", a.disable_img_space},
                     {"sup_only", a.sup_only}};
    return j;
}

// Reads known keys of one section; anything else is an error.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ArgumentError("config section '" + path_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.push_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ArgumentError("config key '" + path_ + "." + key + "': " + e.what());
        }
    }

    void get_shape(const char* key, Shape& out) {
        std::vector<std::size_t> v(out.begin(), out.end());
        get(key, v);
        out.assign(v.begin(), v.end());
    }

    const json* sub(const char* key) {
        seen_.push_back(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw ArgumentError("unknown config key '" + (path_.empty() ? "" : path_ + ".") + it.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

} // namespace

std::string config_to_json(const TrainConfig& cfg) { return to_json_obj(cfg).dump(2); }

TrainConfig config_from_json(const std::string& text, const TrainConfig& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ArgumentError(std::string("config is not valid JSON: ") + e.what());
    }
    TrainConfig c = base;
    Section root(j, "");
    root.get("name", c.name);
    root.get("seeds", c.seeds);
    if (const json* s = root.sub("network")) {
        Section n(*s, "network");
        n.get("in_channels", c.network.in_channels);
        n.get("num_classes", c.network.num_classes);
        n.get("base_width", c.network.base_width);
        n.get("num_stages", c.network.num_stages);
        n.get("feature_dim", c.network.feature_dim);
        n.finish();
    }
    if (const json* s = root.sub("data")) {
        Section d(*s, "data");
        auto& x = c.data;
        d.get_shape("volume_shape", x.volume_shape);
        d.get("num_cases", x.num_cases);
        d.get("num_validation", x.num_validation);
        d.get("num_test", x.num_test);
        d.get("labeled_ratio", x.labeled_ratio);
        d.get("min_blobs", x.min_blobs);
        d.get("max_blobs", x.max_blobs);
        std::string kind = blob_name(x.kind);
        d.get("blob_kind", kind);
        if (kind == "warped")
            x.kind = BlobKind::warped;
        else if (kind == "ellipsoid")
            x.kind = BlobKind::ellipsoid;
        else
            throw ArgumentError("data.blob_kind must be 'ellipsoid' or 'warped'");
        d.get("min_radius", x.min_radius);
        d.get("max_radius", x.max_radius);
        d.get("warp_amplitude", x.warp_amplitude);
        d.get("noise_sigma", x.noise_sigma);
        d.get("contrast", x.contrast);
        d.get("contrast_jitter", x.contrast_jitter);
        d.get("bias_amplitude", x.bias_amplitude);
        d.get("distractors", x.distractors);
        d.get("distractor_contrast", x.distractor_contrast);
        d.get("distractor_radius", x.distractor_radius);
        d.get("edge_blur", x.edge_blur);
        std::vector<double> sp(x.spacing.begin(), x.spacing.end());
        d.get("spacing", sp);
        if (sp.size() != 3) throw ArgumentError("data.spacing must have three entries");
        std::copy(sp.begin(), sp.end(), x.spacing.begin());
        d.get("seed", x.seed);
        d.get("max_retries", x.max_retries);
        d.finish();
    }
    if (const json* s = root.sub("train")) {
        Section t(*s, "train");
        t.get_shape("patch", c.patch);
        t.get_shape("window", c.window);
        t.get_shape("stride", c.stride);
        t.get("iterations", c.iterations);
        t.get("eval_every", c.eval_every);
        t.get("audit_every", c.audit_every);
        t.get("labeled_batch", c.labeled_batch);
        t.get("unlabeled_batch", c.unlabeled_batch);
        t.get("lr", c.lr);
        t.get("momentum", c.momentum);
        t.get("weight_decay", c.weight_decay);
        t.get("ema_alpha", c.ema_alpha);
        t.get("unsup_rampup", c.unsup_rampup);
        std::string mode = c.pseudo_mode == PseudoMode::cross_branch ? "cross_branch" : "self_branch";
        t.get("pseudo_mode", mode);
        if (mode == "cross_branch")
            c.pseudo_mode = PseudoMode::cross_branch;
        else if (mode == "self_branch")
            c.pseudo_mode = PseudoMode::self_branch;
        else
            throw ArgumentError("train.pseudo_mode must be 'cross_branch' or 'self_branch'");
        t.get("eval_batch", c.eval_batch);
        t.get("save_checkpoints", c.save_checkpoints);
        t.finish();
    }
    if (const json* s = root.sub("reliability")) {
        Section r(*s, "reliability");
        r.get("tau_min", c.reliability.tau_min);
        r.get("tau_max", c.reliability.tau_max);
        r.get("tau", c.reliability.tau);
        r.get("epsilon", c.reliability.epsilon);
        r.get("proto_temperature", c.reliability.proto_temperature);
        r.finish();
    }
    if (const json* s = root.sub("morphology")) {
        Section m(*s, "morphology");
        m.get("dilation_radius", c.morphology.dilation_radius);
        m.get("connectivity", c.morphology.connectivity);
        m.get("fallback_cube", c.morphology.fallback_cube);
        m.finish();
    }
    if (const json* s = root.sub("ablation")) {
        Section a(*s, "ablation");
        a.get("disable_U", c.ablation.disable_U);
        a.get("disable_C", c.ablation.disable_C);
        a.get("disable_prob_space", c.ablation.disable_prob_space);
        a.get("disable_feat_space", c.ablation.disable_feat_space);
        a.get("disable_img_space", c.ablation.disable_img_space);
        a.get("sup_only", c.ablation.sup_only);
        a.finish();
    }
    root.finish();
    c.validate();
    return c;
}

TrainConfig load_config(const std::filesystem::path& path, const TrainConfig& base) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str(), base);
}

} // namespace tcseg
