#include "irdet/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "irdet/errors.hpp"

namespace irdet {

namespace {

constexpr uint64_t kStreamInit = 1;
constexpr uint64_t kStreamLabelledIdx = 2;
constexpr uint64_t kStreamLabelledAug = 3;
constexpr uint64_t kStreamUnlabelledIdx = 4;
constexpr uint64_t kStreamStrongAug = 5;
constexpr uint64_t kStreamWeakAug = 6;
constexpr uint64_t kStreamJitter = 7;
constexpr uint64_t kPhaseBurnIn = 11;
constexpr uint64_t kPhaseFineTune = 12;
constexpr uint64_t kPhaseSsl = 13;
constexpr uint64_t kSlotStride = 64; // > any batch size in use

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_positive_range(bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("ssl config: ") + what);
}

void check_phase(const TrainConfig& c, const char* phase) {
    check_positive_range(c.learning_rate > 0.0, "learning rate must be positive");
    check_positive_range(c.batch_size >= 1, "batch size must be at least 1");
    check_positive_range(c.total_iterations >= 0, "iteration count must be non-negative");
    check_positive_range(c.scheduler_factor > 0.0 && c.scheduler_factor <= 1.0,
                         "scheduler factor must be in (0,1]");
    (void)phase;
}

NormStats stats_over(const std::vector<Sample>& samples) {
    std::vector<const Image16*> imgs;
    imgs.reserve(samples.size());
    for (const auto& s : samples) imgs.push_back(&s.image);
    return compute_norm_stats(imgs);
}

} // namespace

void SslConfig::validate() const {
    check_positive_range(lambda_unsup >= 0.0, "lambda_unsup must be non-negative");
    check_positive_range(ema_alpha >= 0.0 && ema_alpha <= 1.0, "ema_alpha must be in [0,1]");
    check_positive_range(pseudo_conf_thresh >= 0.0 && pseudo_conf_thresh <= 1.0,
                         "pseudo-label confidence threshold must be in [0,1]");
    check_positive_range(jitter_count >= 0, "jitter count must be non-negative");
    check_positive_range(jitter_scale >= 0.0, "jitter scale must be non-negative");
    check_positive_range(jitter_var_thresh >= 0.0, "jitter variance threshold must be non-negative");
    check_positive_range(labelled_per_batch >= 1, "labelled batch share must be at least 1");
    check_positive_range(unlabelled_per_batch >= 0, "unlabelled batch share must be non-negative");
    check_positive_range(fine_tune_iterations >= -1, "fine-tune iteration count out of range");
    check_phase(burn_in, "burn_in");
    check_phase(ssl, "ssl");
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open log file: " + path);
    f.precision(std::numeric_limits<double>::max_digits10);
    f << "iteration,l_sup,l_unsup_cls,l_unsup_reg,lr,n_pseudo\n";
    for (const auto& r : log)
        f << r.iteration << ',' << r.l_sup << ',' << r.l_unsup_cls << ',' << r.l_unsup_reg << ','
          << r.lr << ',' << r.n_pseudo << '\n';
}

void ema_update(TeacherState& teacher, const DetectorParams& student, double alpha) {
    if (teacher.params.size() != student.size())
        throw ValidationError("ema_update: parameter shape mismatch");
    teacher.params.values() =
        alpha * teacher.params.values() + (1.0 - alpha) * student.values();
}

double sample_cell_field(const Eigen::VectorXd& field, int gh, int gw, double cell_size, double x,
                         double y) {
    if (field.size() != static_cast<Eigen::Index>(gh) * gw)
        throw ValidationError("sample_cell_field: field size mismatch");
    double u = std::clamp(x / cell_size - 0.5, 0.0, static_cast<double>(gw - 1));
    double v = std::clamp(y / cell_size - 0.5, 0.0, static_cast<double>(gh - 1));
    int c0 = std::min(static_cast<int>(std::floor(u)), gw - 1);
    int r0 = std::min(static_cast<int>(std::floor(v)), gh - 1);
    const double fu = u - c0, fv = v - r0;
    const int c1 = std::min(c0 + 1, gw - 1);
    const int r1 = std::min(r0 + 1, gh - 1);
    const double top = (1.0 - fu) * field[r0 * gw + c0] + fu * field[r0 * gw + c1];
    const double bot = (1.0 - fu) * field[r1 * gw + c0] + fu * field[r1 * gw + c1];
    return (1.0 - fv) * top + fv * bot;
}

BBox reregress_at(const DetectorConfig& cfg, const HeadOutput& head, double x, double y) {
    const double cs = cfg.cell_size();
    Eigen::Vector4d d;
    for (int k = 0; k < 4; ++k) {
        const Eigen::VectorXd channel = head.box.row(k).transpose();
        d[k] = sample_cell_field(channel, head.gh, head.gw, cs, x, y);
    }
    const double cx = x + d[0] * cs;
    const double cy = y + d[1] * cs;
    const double w = cfg.anchor_size * std::exp(std::clamp(d[2], -10.0, 6.0));
    const double h = cfg.anchor_size * std::exp(std::clamp(d[3], -10.0, 6.0));
    return {cx - w / 2.0, cy - h / 2.0, w, h};
}

Eigen::VectorXd background_prob_field(const HeadOutput& head) {
    Eigen::VectorXd out(head.obj.size());
    for (Eigen::Index i = 0; i < head.obj.size(); ++i) out[i] = 1.0 - sigmoid(head.obj[i]);
    return out;
}

PseudoLabels pseudo_label(const DetectorConfig& dcfg, const DetectorParams& teacher,
                          const NormStats& stats, const Image16& image, const SslConfig& cfg,
                          Rng& weak_rng, Rng& jitter_rng) {
    AugmentedSample weak = weak_augment(image, {}, weak_rng);
    PseudoLabels out;
    out.weak_head = forward(teacher, normalize(weak.image, stats));
    out.weak_applied = weak.applied;

    const double w = dcfg.input_width, h = dcfg.input_height;
    const Affine inv = geometric_transform(weak.applied, w, h).inverse();
    const auto dets = decode(dcfg, out.weak_head, cfg.pseudo_conf_thresh, dcfg.nms_thresh);

    std::vector<double> samples[4];
    for (auto& s : samples) s.reserve(static_cast<std::size_t>(cfg.jitter_count));
    for (const auto& d : dets) {
        const double bw = d.box.w, bh = d.box.h;
        for (auto& s : samples) s.clear();
        for (int j = 0; j < cfg.jitter_count; ++j) {
            const double ox = jitter_rng.uniform(-cfg.jitter_scale, cfg.jitter_scale) * bw;
            const double oy = jitter_rng.uniform(-cfg.jitter_scale, cfg.jitter_scale) * bh;
            const double ow = jitter_rng.uniform(-cfg.jitter_scale, cfg.jitter_scale) * bw;
            const double oh = jitter_rng.uniform(-cfg.jitter_scale, cfg.jitter_scale) * bh;
            const double qx = d.box.x + ox + (bw + ow) / 2.0;
            const double qy = d.box.y + oy + (bh + oh) / 2.0;
            const BBox rb = reregress_at(dcfg, out.weak_head, qx, qy);
            samples[0].push_back(rb.cx() / bw);
            samples[1].push_back(rb.cy() / bh);
            samples[2].push_back(rb.w / bw);
            samples[3].push_back(rb.h / bh);
        }
        double stab = 0.0;
        if (cfg.jitter_count > 0) {
            for (const auto& s : samples) {
                double mean = 0.0;
                for (double v : s) mean += v;
                mean /= static_cast<double>(s.size());
                double var = 0.0;
                for (double v : s) var += (v - mean) * (v - mean);
                stab += var / static_cast<double>(s.size());
            }
            stab /= 4.0;
        }
        PseudoCandidate c;
        c.box = d;
        c.box.box = transform_box(inv, d.box);
        c.stability = stab;
        out.candidates.push_back(c);
    }
    return out;
}

LossTerms unsup_cls_loss(const DetectorConfig& cfg, const HeadOutput& student_head,
                         const std::vector<GtBox>& pseudo_boxes,
                         const Eigen::VectorXd& neg_weights) {
    const CellTargets t = assign_targets(cfg, pseudo_boxes);
    return detection_loss(cfg, student_head, t, &neg_weights, true, false);
}

LossTerms unsup_reg_loss(const DetectorConfig& cfg, const HeadOutput& student_head,
                         const std::vector<GtBox>& stable_boxes) {
    const CellTargets t = assign_targets(cfg, stable_boxes);
    return detection_loss(cfg, student_head, t, nullptr, false, true);
}

AugmentedSample augment_labelled(const Image16& image, const std::vector<GtBox>& boxes, Rng& rng) {
    return supervised_augment(image, boxes, rng);
}

AugmentedSample augment_strong(const Image16& image, const std::vector<GtBox>& boxes, Rng& rng) {
    return strong_augment(image, boxes, rng);
}

namespace {

// one labelled slot: augment, forward, supervised loss, accumulate grads
double labelled_slot(const DetectorConfig& dcfg, const DetectorParams& params, const Sample& s,
                     const NormStats& stats, Rng& aug_rng, int batch, Eigen::VectorXd& grad) {
    AugmentedSample a = augment_labelled(s.image, s.boxes, aug_rng);
    const ForwardTrace tr = forward_trace(params, normalize(a.image, stats));
    const CellTargets tg = assign_targets(dcfg, a.boxes);
    LossTerms l = detection_loss(dcfg, tr.head, tg);
    const double inv = 1.0 / batch;
    l.dhead.obj *= inv;
    l.dhead.cls *= inv;
    l.dhead.box *= inv;
    backward(params, tr, l.dhead, grad);
    return l.total * inv;
}

} // namespace

DetectorParams train_supervised(const DetectorConfig& dcfg, DetectorParams params,
                                const std::vector<Sample>& labelled, const TrainConfig& cfg,
                                const NormStats& stats, uint64_t seed, TrainLog* log) {
    if (labelled.empty()) throw ValidationError("train_supervised: empty labelled set");
    check_phase(cfg, "supervised");
    Eigen::VectorXd velocity = Eigen::VectorXd::Zero(params.size());
    Eigen::VectorXd grad(params.size());
    for (int it = 0; it < cfg.total_iterations; ++it) {
        grad.setZero();
        Rng ridx(derive_seed(seed, kStreamLabelledIdx, static_cast<uint64_t>(it)));
        std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch_size));
        for (auto& i : idx) i = static_cast<std::size_t>(ridx.uniform_int(labelled.size()));
        double l_sup = 0.0;
        for (int slot = 0; slot < cfg.batch_size; ++slot) {
            Rng raug(derive_seed(seed, kStreamLabelledAug,
                                 static_cast<uint64_t>(it) * kSlotStride + slot));
            l_sup += labelled_slot(dcfg, params, labelled[idx[static_cast<std::size_t>(slot)]],
                                   stats, raug, cfg.batch_size, grad);
        }
        sgd_step(params, velocity, grad, cfg, it);
        if (log) log->push_back({it, l_sup, 0.0, 0.0, lr_at(cfg, it), 0});
    }
    return params;
}

TrainedModel train_burn_in(const DetectorConfig& dcfg, const std::vector<Sample>& labelled,
                           const TrainConfig& cfg, uint64_t seed, TrainLog* log,
                           const NormStats* stats) {
    if (labelled.empty()) throw ValidationError("train_burn_in: empty labelled set");
    const NormStats st = stats ? *stats : stats_over(labelled);
    Rng rinit(derive_seed(seed, kStreamInit));
    DetectorParams params = init_params(dcfg, rinit);
    params = train_supervised(dcfg, std::move(params), labelled, cfg, st, seed, log);
    return {std::move(params), st};
}

DetectorParams fine_tune(const DetectorConfig& dcfg, DetectorParams params,
                         const std::vector<Sample>& labelled, const TrainConfig& cfg,
                         const NormStats& stats, uint64_t seed, TrainLog* log) {
    return train_supervised(dcfg, std::move(params), labelled, cfg, stats, seed, log);
}

bool train_ssl(const DetectorConfig& dcfg, DetectorParams& student, TeacherState& teacher,
               const std::vector<Sample>& labelled, const std::vector<Sample>& unlabelled,
               const SslConfig& cfg, const NormStats& stats, uint64_t seed, TrainLog* log) {
    cfg.validate();
    if (labelled.empty()) throw ValidationError("train_ssl: empty labelled set");
    if (teacher.params.size() != student.size())
        throw ValidationError("train_ssl: teacher/student shape mismatch");
    bool warned = false;
    if (unlabelled.empty()) {
        std::cerr << "warning: train_ssl called with no unlabelled images; "
                     "running as plain supervised training\n";
        warned = true;
    }

    const TrainConfig& tc = cfg.ssl;
    const int n_lab = cfg.labelled_per_batch;
    const int n_unlab = cfg.unlabelled_per_batch;
    const double w = dcfg.input_width, h = dcfg.input_height;
    Eigen::VectorXd velocity = Eigen::VectorXd::Zero(student.size());
    Eigen::VectorXd grad(student.size());

    for (int it = 0; it < tc.total_iterations; ++it) {
        grad.setZero();
        TrainLogRow row{it, 0.0, 0.0, 0.0, lr_at(tc, it), 0};

        Rng ridx(derive_seed(seed, kStreamLabelledIdx, static_cast<uint64_t>(it)));
        std::vector<std::size_t> idx(static_cast<std::size_t>(n_lab));
        for (auto& i : idx) i = static_cast<std::size_t>(ridx.uniform_int(labelled.size()));
        for (int slot = 0; slot < n_lab; ++slot) {
            Rng raug(derive_seed(seed, kStreamLabelledAug,
                                 static_cast<uint64_t>(it) * kSlotStride + slot));
            row.l_sup += labelled_slot(dcfg, student, labelled[idx[static_cast<std::size_t>(slot)]],
                                       stats, raug, n_lab, grad);
        }

        if (!unlabelled.empty() && n_unlab > 0) {
            Rng uidx(derive_seed(seed, kStreamUnlabelledIdx, static_cast<uint64_t>(it)));
            std::vector<std::size_t> uix(static_cast<std::size_t>(n_unlab));
            for (auto& i : uix) i = static_cast<std::size_t>(uidx.uniform_int(unlabelled.size()));
            for (int slot = 0; slot < n_unlab; ++slot) {
                const Sample& s = unlabelled[uix[static_cast<std::size_t>(slot)]];
                const uint64_t slot_key = static_cast<uint64_t>(it) * kSlotStride + slot;
                Rng rweak(derive_seed(seed, kStreamWeakAug, slot_key));
                Rng rjit(derive_seed(seed, kStreamJitter, slot_key));
                const PseudoLabels pl =
                    pseudo_label(dcfg, teacher.params, stats, s.image, cfg, rweak, rjit);
                row.n_pseudo += static_cast<int>(pl.candidates.size());

                Rng rstrong(derive_seed(seed, kStreamStrongAug, slot_key));
                AugmentedSample strong = augment_strong(s.image, {}, rstrong);
                const Affine strong_geo = geometric_transform(strong.applied, w, h);

                std::vector<GtBox> cls_boxes, reg_boxes;
                for (const auto& c : pl.candidates) {
                    const auto mapped = transform_clip_box(strong_geo, c.box.box, w, h);
                    if (!mapped) continue;
                    const GtBox g{*mapped, c.box.class_id};
                    cls_boxes.push_back(g);
                    if (c.stability < cfg.jitter_var_thresh) reg_boxes.push_back(g);
                }

                const Affine to_weak =
                    strong_geo.inverse().then(geometric_transform(pl.weak_applied, w, h));
                const Eigen::VectorXd bg = background_prob_field(pl.weak_head);
                Eigen::VectorXd negw(dcfg.cells());
                const double cs = dcfg.cell_size();
                for (int cell = 0; cell < dcfg.cells(); ++cell) {
                    const int r = cell / dcfg.grid_w(), c = cell % dcfg.grid_w();
                    const auto [wx, wy] = to_weak.apply((c + 0.5) * cs, (r + 0.5) * cs);
                    negw[cell] =
                        sample_cell_field(bg, pl.weak_head.gh, pl.weak_head.gw, cs, wx, wy);
                }

                const ForwardTrace tr = forward_trace(student, normalize(strong.image, stats));
                const LossTerms lc = unsup_cls_loss(dcfg, tr.head, cls_boxes, negw);
                const LossTerms lrg = unsup_reg_loss(dcfg, tr.head, reg_boxes);
                row.l_unsup_cls += lc.total / n_unlab;
                row.l_unsup_reg += lrg.total / n_unlab;
                if (cfg.lambda_unsup > 0.0) {
                    const double scale = cfg.lambda_unsup / n_unlab;
                    HeadGrad dh;
                    dh.obj = scale * (lc.dhead.obj + lrg.dhead.obj);
                    dh.cls = scale * (lc.dhead.cls + lrg.dhead.cls);
                    dh.box = scale * (lc.dhead.box + lrg.dhead.box);
                    backward(student, tr, dh, grad);
                }
            }
        }

        sgd_step(student, velocity, grad, tc, it);
        ema_update(teacher, student, cfg.ema_alpha);
        if (log) log->push_back(row);
    }
    return warned;
}

TrainedModel method1(const DetectorConfig& dcfg, const std::vector<Sample>& labelled,
                     const std::vector<Sample>& unlabelled, const SslConfig& cfg, uint64_t seed,
                     TrainLog* log) {
    cfg.validate();
    if (labelled.empty()) throw ValidationError("method1: empty labelled set");
    const NormStats st = stats_over(labelled);
    TrainedModel m =
        train_burn_in(dcfg, labelled, cfg.burn_in, derive_seed(seed, kPhaseBurnIn), log, &st);
    TeacherState teacher{m.params};
    train_ssl(dcfg, m.params, teacher, labelled, unlabelled, cfg, st,
              derive_seed(seed, kPhaseSsl), log);
    return m;
}

TrainedModel method2(const DetectorConfig& dcfg, const std::vector<Sample>& labelled_a,
                     const std::vector<Sample>& labelled_b, const std::vector<Sample>& unlabelled,
                     const SslConfig& cfg, uint64_t seed, TrainLog* log) {
    cfg.validate();
    if (labelled_a.empty()) throw ValidationError("method2: empty first labelled set");
    if (labelled_b.empty()) throw ValidationError("method2: empty second labelled set");
    std::vector<Sample> combined = labelled_a;
    combined.insert(combined.end(), labelled_b.begin(), labelled_b.end());
    const NormStats st = stats_over(combined);

    TrainedModel m =
        train_burn_in(dcfg, labelled_a, cfg.burn_in, derive_seed(seed, kPhaseBurnIn), log, &st);

    TrainConfig ft = cfg.burn_in;
    ft.learning_rate = cfg.ssl.learning_rate;
    ft.total_iterations = cfg.resolved_fine_tune_iterations();
    ft.scheduler_steps.clear();
    m.params = fine_tune(dcfg, std::move(m.params), labelled_b, ft, st,
                         derive_seed(seed, kPhaseFineTune), log);

    TeacherState teacher{m.params};
    train_ssl(dcfg, m.params, teacher, combined, unlabelled, cfg, st,
              derive_seed(seed, kPhaseSsl), log);
    return m;
}

} // namespace irdet
