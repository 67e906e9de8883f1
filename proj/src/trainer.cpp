#include "tcseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tcseg/errors.hpp"
#include "tcseg/hash.hpp"
#include "tcseg/morphology.hpp"
#include "tcseg/ops.hpp"
#include "tcseg/optim.hpp"
#include "tcseg/reliability.hpp"
#include "tcseg/volume_io.hpp"

namespace tcseg {

namespace {

Tensor as_batch(const Tensor& image) {
    Shape s = image.shape();
    s.insert(s.begin(), 1);
    return Tensor(std::move(s), std::vector<double>(image.values().begin(), image.values().end()));
}

std::pair<std::size_t, std::size_t> pick_two(std::size_t n, std::mt19937_64& rng) {
    if (n < 2) throw ArgumentError("need at least two cases per split to form a batch");
    std::uniform_int_distribution<std::size_t> first(0, n - 1), second(0, n - 2);
    const std::size_t a = first(rng);
    std::size_t b = second(rng);
    if (b >= a) ++b;
    return {a, b};
}

std::span<const std::int32_t> sample_labels(const std::vector<std::int32_t>& labels, std::size_t i, std::size_t s) {
    return std::span<const std::int32_t>(labels).subspan(i * s, s);
}

std::vector<std::int32_t> range_labels(const std::vector<std::int32_t>& labels, std::size_t begin,
                                       std::size_t count, std::size_t s) {
    return {labels.begin() + static_cast<std::ptrdiff_t>(begin * s),
            labels.begin() + static_cast<std::ptrdiff_t>((begin + count) * s)};
}

bool finite(const LossBreakdown& b) {
    return std::isfinite(b.l_sup) && std::isfinite(b.l_pse) && std::isfinite(b.l_cal) && std::isfinite(b.l_mix) &&
           std::isfinite(b.l_total);
}

void dump_batch(const std::filesystem::path& dir, const Batch& batch, std::size_t iteration,
                const LossBreakdown& b) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    const std::vector<double> sp(batch.x_l.rank(), 1.0);
    write_volume(dir / "x_l.tcsv", batch.x_l, sp);
    write_volume(dir / "y_l.tcsv", batch.y_l, sp);
    write_volume(dir / "x_u.tcsv", batch.x_u, sp);
    std::ofstream info(dir / "losses.txt");
    info << "iteration " << iteration << "\nl_sup " << b.l_sup << "\nl_pse " << b.l_pse << "\nl_cal " << b.l_cal
         << "\nl_mix " << b.l_mix << "\nl_total " << b.l_total << '\n';
}

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const ModelPair& m) {
    Snapshot s;
    for (const auto* net : {&m.student(), &m.teacher()})
        for (const auto& p : net->parameters()) s.emplace_back(p.value.values().begin(), p.value.values().end());
    return s;
}

void restore(ModelPair& m, const Snapshot& s) {
    std::size_t i = 0;
    for (auto* net : {&m.student(), &m.teacher()})
        for (auto& p : net->parameters()) {
            auto dst = p.value.mutable_values();
            std::copy(s[i].begin(), s[i].end(), dst.begin());
            ++i;
        }
}

nlohmann::json summary_json(const ScoreSummary& s) {
    nlohmann::json j;
    j["dsc"] = s.dsc;
    j["asd"] = s.asd ? nlohmann::json(*s.asd) : nlohmann::json(nullptr);
    j["hd95"] = s.hd95 ? nlohmann::json(*s.hd95) : nlohmann::json(nullptr);
    j["missing_distance"] = s.missing_distance;
    return j;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json record_json(const RunRecord& r, bool with_time) {
    nlohmann::json j;
    j["name"] = r.name;
    j["seed"] = r.seed;
    j["best_iteration"] = r.best_iteration;
    j["best_val_dsc"] = r.best_val_dsc;
    j["last_iteration"] = r.last_iteration;
    j["last_val_dsc"] = r.last_val_dsc;
    j["val_dsc"] = nlohmann::json::array();
    for (const auto& [it, d] : r.val_dsc) j["val_dsc"].push_back({{"iteration", it}, {"dsc", d}});
    j["test_best"] = summary_json(r.test_best);
    j["test_last"] = summary_json(r.test_last);
    j["audit"] = nlohmann::json::array();
    for (const auto& [it, a] : r.audit)
        j["audit"].push_back({{"iteration", it},
                              {"tp", a.tp},
                              {"fp", a.fp},
                              {"tn", a.tn},
                              {"fn", a.fn},
                              {"ppv", opt_json(a.ppv)},
                              {"npv", opt_json(a.npv)},
                              {"recall", opt_json(a.recall)}});
    j["fallback_count"] = r.fallback_count;
    // The loss log is hashed through its exact bit patterns.
    Fnv1a h;
    for (const auto& b : r.loss_log) {
        for (double v : {b.l_sup, b.l_pse, b.l_cal, b.l_mix, b.l_total}) h.f64(v);
        h.u64(b.active_pos_count);
        h.u64(b.active_neg_count);
    }
    j["loss_log_entries"] = r.loss_log.size();
    j["loss_log_hash"] = h.digest();
    if (with_time) j["seconds"] = r.seconds;
    return j;
}

} // namespace

Batch make_batch(const TrainingView& view, const TrainConfig& cfg, std::mt19937_64& rng) {
    Batch b;
    const auto [l0, l1] = pick_two(view.labeled.size(), rng);
    const auto [u0, u1] = pick_two(view.unlabeled.size(), rng);
    std::vector<Tensor> xs;
    for (std::size_t i : {l0, l1}) {
        Patch p = sample_patch(*view.labeled[i].image, *view.labeled[i].label, cfg.patch, rng);
        xs.push_back(as_batch(p.image));
        for (std::size_t v = 0; v < p.label.size(); ++v) b.labels_l.push_back(p.label[v] ? 1 : 0);
    }
    b.x_l = concat_batch(xs);
    xs.clear();
    for (std::size_t i : {u0, u1}) xs.push_back(as_batch(sample_patch(*view.unlabeled[i].image, cfg.patch, rng)));
    b.x_u = concat_batch(xs);
    b.y_l = one_hot(b.labels_l, cfg.network.num_classes, Shape{2, cfg.patch[0], cfg.patch[1], cfg.patch[2]});
    return b;
}

RunStreams make_streams(std::uint64_t seed) {
    auto stream = [seed](std::uint32_t id) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
        return std::mt19937_64(seq);
    };
    RunStreams s{stream(1), stream(2), 0};
    s.init_seed = stream(3)();
    return s;
}

TrainState::TrainState(const TrainConfig& cfg, std::uint64_t seed)
    : model(cfg.network, make_streams(seed).init_seed), streams(make_streams(seed)) {
    for (auto& p : model.student().parameters()) p.value.zero_grad();
}

LossBreakdown train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg, StepTrace* trace) {
    const ReliabilityConfig rel = cfg.effective_reliability();
    const AblationSwitches& ab = cfg.ablation;
    ModelPair& model = state.model;
    const std::size_t k = cfg.network.num_classes;
    const std::size_t nl = batch.x_l.dim(0), nu = batch.x_u.dim(0);
    const Shape& ps = cfg.patch;
    const std::size_t vox = shape_numel(ps);
    LossParts parts;

    if (ab.sup_only) {
        auto [s1, s2] = model.forward(batch.x_l);
        parts.l_sup = supervised_loss(s1.prob, s2.prob, batch.y_l);
    } else {
        const Tensor x = concat_batch({batch.x_l, batch.x_u});
        auto [s1, s2] = model.forward(x);
        auto [t1, t2] = model.teacher_forward(x);
        parts.l_sup = supervised_loss(slice_batch(s1.prob, 0, nl), slice_batch(s2.prob, 0, nl), batch.y_l);

        const std::vector<Tensor> views{s1.prob, s2.prob, t1.prob, t2.prob};
        const Tensor C = confidence(views);
        const auto lab_s1 = argmax_labels(s1.prob), lab_s2 = argmax_labels(s2.prob);
        const auto lab_t1 = argmax_labels(t1.prob), lab_t2 = argmax_labels(t2.prob);
        const Tensor q_s1 = proto_similarity(s1.features, build_prototypes(s1.features, lab_s1, C, k, rel), rel);
        const Tensor q_s2 = proto_similarity(s2.features, build_prototypes(s2.features, lab_s2, C, k, rel), rel);

        MaskSet masks;
        {
            NoGradGuard no_grad;
            const Tensor q_t1 = proto_similarity(t1.features, build_prototypes(t1.features, lab_t1, C, k, rel), rel);
            const Tensor q_t2 = proto_similarity(t2.features, build_prototypes(t2.features, lab_t2, C, k, rel), rel);
            auto unl = [&](const Tensor& t) { return slice_batch(t, nl, nu); };
            ReliabilityField field{unl(C), prob_uncertainty(unl(s1.prob), unl(s2.prob)),
                                   prob_uncertainty(unl(t1.prob), unl(t2.prob)),
                                   feat_uncertainty(unl(q_s1), unl(q_s2)), feat_uncertainty(unl(q_t1), unl(q_t2))};
            masks = build_masks(field, rel);
        }
        if (trace) trace->masks = masks;
        parts.pos_count = masks.m_pos.count();
        parts.neg_count = masks.m_neg.count();
        const Shape u_shape{nu, ps[0], ps[1], ps[2]};

        if (!ab.disable_prob_space) {
            const bool cross = cfg.pseudo_mode == PseudoMode::cross_branch;
            const Tensor y1 = one_hot(range_labels(cross ? lab_s2 : lab_s1, nl, nu, vox), k, u_shape);
            const Tensor y2 = one_hot(range_labels(cross ? lab_s1 : lab_s2, nl, nu, vox), k, u_shape);
            parts.l_pse = add(pseudo_loss_cross_branch(slice_batch(s1.prob, nl, nu), y1, masks),
                              pseudo_loss_cross_branch(slice_batch(s2.prob, nl, nu), y2, masks));
        }
        if (!ab.disable_feat_space) parts.l_cal = feature_calibration_loss(s1.prob, s2.prob, q_s1, q_s2);

        if (!ab.disable_img_space) {
            const Connectivity conn = connectivity_from_int(cfg.morphology.connectivity);
            const BinaryVolume m_per = perturbation_mask(masks, cfg.morphology.dilation_radius, conn);
            std::vector<std::size_t> pair(nl);
            std::iota(pair.begin(), pair.end(), std::size_t{0});
            std::shuffle(pair.begin(), pair.end(), state.streams.mix);
            std::vector<Tensor> xs;
            std::vector<std::int32_t> y_for_1, y_for_2;
            for (std::size_t i = 0; i < nu; ++i) {
                BinaryVolume m = m_per.sample(i);
                if (m.empty_set() && cfg.morphology.fallback_cube) {
                    m = centered_cube_mask(ps);
                    ++state.fallback_count;
                    if (trace) ++trace->fallbacks;
                }
                const std::size_t j = pair[i % nl];
                const Tensor xl = slice_batch(batch.x_l, j, 1), xu = slice_batch(batch.x_u, i, 1);
                const auto yl = sample_labels(batch.labels_l, j, vox);
                // Branch b is supervised by the peer teacher branch.
                MixedSample a = cutmix(xl, yl, xu, sample_labels(lab_t2, nl + i, vox), m);
                MixedSample b = cutmix(xl, yl, xu, sample_labels(lab_t1, nl + i, vox), m);
                xs.push_back(a.x);
                y_for_1.insert(y_for_1.end(), a.y.begin(), a.y.end());
                y_for_2.insert(y_for_2.end(), b.y.begin(), b.y.end());
            }
            const Tensor x_mix = concat_batch(xs);
            if (trace) {
                trace->m_per = m_per;
                trace->pair.clear();
                for (std::size_t i = 0; i < nu; ++i) trace->pair.push_back(pair[i % nl]);
                trace->x_mix = x_mix;
                trace->y_mix_1 = y_for_1;
                trace->y_mix_2 = y_for_2;
            }
            auto [m1, m2] = model.forward(x_mix);
            parts.l_mix = add(mix_loss(m1.prob, one_hot(y_for_1, k, u_shape)),
                              mix_loss(m2.prob, one_hot(y_for_2, k, u_shape)));
        }
    }

    LossBreakdown out;
    const Tensor total = total_loss(parts, out, cfg.unsup_weight(state.iteration + 1));
    if (!finite(out)) {
        dump_batch(state.dump_dir, batch, state.iteration + 1, out);
        throw TrainingError("non-finite loss at iteration " + std::to_string(state.iteration + 1) +
                            (state.dump_dir.empty() ? "" : "; batch dumped to " + state.dump_dir.string()));
    }
    backward(total);
    sgd_step(model.student().parameters(), SgdOptions{cfg.lr, cfg.momentum, cfg.weight_decay});
    model.update_teacher(cfg.ema_alpha);
    ++state.iteration;
    return out;
}

Predictor student_predictor(const ModelPair& model, int branch) {
    if (branch < 0 || branch > 2) throw ArgumentError("branch must be 0 (average), 1 or 2");
    return [&model, branch](const Tensor& x) {
        NoGradGuard no_grad;
        auto [a, b] = model.student().forward(x);
        if (branch == 1) return a.prob;
        if (branch == 2) return b.prob;
        return scale(add(a.prob, b.prob), 0.5);
    };
}

Predictor teacher_predictor(const ModelPair& model) {
    return [&model](const Tensor& x) {
        auto [a, b] = model.teacher_forward(x);
        NoGradGuard no_grad;
        return scale(add(a.prob, b.prob), 0.5);
    };
}

std::vector<SegScore> evaluate(const Predictor& predictor, const std::vector<const Case*>& cases,
                               const TrainConfig& cfg) {
    std::vector<SegScore> out;
    out.reserve(cases.size());
    for (const Case* c : cases) {
        const Tensor probs = sliding_window_infer(predictor, c->image, cfg.window, cfg.stride, cfg.eval_batch);
        out.push_back(score(foreground_mask(probs), c->label, c->spacing));
    }
    return out;
}

double mean_dsc(const std::vector<SegScore>& scores) {
    if (scores.empty()) return 0.0;
    double s = 0.0;
    for (const auto& x : scores) s += x.dsc;
    return s / static_cast<double>(scores.size());
}

ScoreSummary summarize(const std::vector<SegScore>& scores) {
    ScoreSummary s;
    s.dsc = mean_dsc(scores);
    double asd_sum = 0.0, hd_sum = 0.0;
    std::size_t n = 0;
    for (const auto& x : scores) {
        if (x.asd_mm && x.hd95_mm) {
            asd_sum += *x.asd_mm;
            hd_sum += *x.hd95_mm;
            ++n;
        } else {
            ++s.missing_distance;
        }
    }
    if (n > 0) {
        s.asd = asd_sum / static_cast<double>(n);
        s.hd95 = hd_sum / static_cast<double>(n);
    }
    return s;
}

AuditScore audit_pseudo_labels(const ModelPair& model, const Dataset& data, const TrainConfig& cfg) {
    AuditScore total = audit_from_counts(0, 0, 0, 0);
    const Predictor pred = teacher_predictor(model);
    for (const Case* c : data.select(Split::unlabeled)) {
        const Tensor probs = sliding_window_infer(pred, c->image, cfg.window, cfg.stride, cfg.eval_batch);
        total += audit(foreground_mask(probs), c->label);
    }
    return total;
}

std::uint64_t RunRecord::hash() const {
    Fnv1a h;
    h.str(record_json(*this, false).dump());
    return h.digest();
}

std::string RunRecord::to_json() const {
    nlohmann::json j = record_json(*this, true);
    j["hash"] = hash();
    return j.dump(2);
}

namespace {

std::optional<double> opt_from(const nlohmann::json& j) {
    return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

ScoreSummary summary_from(const nlohmann::json& j) {
    ScoreSummary s;
    s.dsc = j.at("dsc").get<double>();
    s.asd = opt_from(j.at("asd"));
    s.hd95 = opt_from(j.at("hd95"));
    s.missing_distance = j.at("missing_distance").get<std::size_t>();
    return s;
}

} // namespace

RunRecord load_run(const std::filesystem::path& dir) {
    std::ifstream in(dir / "run_record.json");
    if (!in) throw FormatError("cannot read " + (dir / "run_record.json").string());
    RunRecord r;
    std::uint64_t stored = 0;
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        r.name = j.at("name").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.best_iteration = j.at("best_iteration").get<std::size_t>();
        r.best_val_dsc = j.at("best_val_dsc").get<double>();
        r.last_iteration = j.at("last_iteration").get<std::size_t>();
        r.last_val_dsc = j.at("last_val_dsc").get<double>();
        for (const auto& e : j.at("val_dsc"))
            r.val_dsc.emplace_back(e.at("iteration").get<std::size_t>(), e.at("dsc").get<double>());
        r.test_best = summary_from(j.at("test_best"));
        r.test_last = summary_from(j.at("test_last"));
        for (const auto& e : j.at("audit")) {
            AuditScore a = audit_from_counts(e.at("tp").get<std::uint64_t>(), e.at("fp").get<std::uint64_t>(),
                                             e.at("tn").get<std::uint64_t>(), e.at("fn").get<std::uint64_t>());
            r.audit.emplace_back(e.at("iteration").get<std::size_t>(), a);
        }
        r.fallback_count = j.at("fallback_count").get<std::size_t>();
        r.seconds = j.value("seconds", 0.0);
        stored = j.at("hash").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "run_record.json").string() + ": " + e.what());
    }
    r.loss_log = read_loss_log(dir / "loss_log.csv");
    if (r.hash() != stored) throw FormatError(dir.string() + ": run record hash does not match its contents");
    return r;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossBreakdown>& log) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "iteration,l_sup,l_pse,l_cal,l_mix,l_total,pos_count,neg_count\n";
    char buf[256];
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& b = log[i];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%zu\n", i + 1, b.l_sup, b.l_pse,
                      b.l_cal, b.l_mix, b.l_total, b.active_pos_count, b.active_neg_count);
        out << buf;
    }
}

std::vector<LossBreakdown> read_loss_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "iteration,l_sup,l_pse,l_cal,l_mix,l_total,pos_count,neg_count")
        throw FormatError(path.string() + ": unexpected loss log header");
    std::vector<LossBreakdown> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        LossBreakdown b;
        std::size_t it = 0;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf,%zu,%zu", &it, &b.l_sup, &b.l_pse, &b.l_cal,
                        &b.l_mix, &b.l_total, &b.active_pos_count, &b.active_neg_count) != 8)
            throw FormatError(path.string() + ": malformed loss log line '" + line + "'");
        out.push_back(b);
    }
    return out;
}

RunRecord run(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed, const std::filesystem::path& out_dir) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    TrainState st(cfg, seed);
    const bool write = !out_dir.empty();
    if (write) {
        std::filesystem::create_directories(out_dir);
        st.dump_dir = out_dir / "nan_dump";
    }
    const TrainingView view = training_view(data);
    const auto val = data.select(Split::validation);
    const auto test = data.select(Split::test);

    RunRecord rec;
    rec.name = cfg.name;
    rec.seed = seed;
    Snapshot best;
    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        const Batch batch = make_batch(view, cfg, st.streams.data);
        rec.loss_log.push_back(train_step(st, batch, cfg));
        if (it % cfg.eval_every == 0 || it == cfg.iterations) {
            const double d = mean_dsc(evaluate(student_predictor(st.model), val, cfg));
            rec.val_dsc.emplace_back(it, d);
            if (rec.val_dsc.size() == 1 || d > rec.best_val_dsc) {
                rec.best_val_dsc = d;
                rec.best_iteration = it;
                best = snapshot(st.model);
                if (write && cfg.save_checkpoints) save_checkpoint(out_dir / "checkpoint_best.tcck", st.model, it);
            }
        }
        if (cfg.audit_every > 0 && it % cfg.audit_every == 0 && it != cfg.iterations)
            rec.audit.emplace_back(it, audit_pseudo_labels(st.model, data, cfg));
    }
    rec.last_iteration = cfg.iterations;
    rec.last_val_dsc = rec.val_dsc.back().second;
    rec.audit.emplace_back(cfg.iterations, audit_pseudo_labels(st.model, data, cfg));
    rec.test_last = summarize(evaluate(student_predictor(st.model), test, cfg));
    if (write && cfg.save_checkpoints) save_checkpoint(out_dir / "checkpoint_last.tcck", st.model, cfg.iterations);

    ModelPair best_model(cfg.network, st.streams.init_seed);
    restore(best_model, best);
    rec.test_best = summarize(evaluate(student_predictor(best_model), test, cfg));
    rec.fallback_count = st.fallback_count;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (rec.best_val_dsc < rec.last_val_dsc) throw StateError("best validation DSC below last");
    if (write) {
        write_loss_log(out_dir / "loss_log.csv", rec.loss_log);
        std::ofstream ev(out_dir / "eval_log.csv");
        ev << "iteration,val_dsc\n";
        char buf[64];
        for (const auto& [it, d] : rec.val_dsc) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g\n", it, d);
            ev << buf;
        }
        std::ofstream(out_dir / "run_record.json") << rec.to_json() << '\n';
    }
    return rec;
}

} // namespace tcseg
