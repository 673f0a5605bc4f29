#include "irdet/detector.hpp"

#include <algorithm>
#include <cmath>

#include "irdet/errors.hpp"

namespace irdet {

namespace {

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// numerically stable binary cross entropy from a logit
double bce_logit(double logit, double target) {
    return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

Eigen::MatrixXd im2col(const Eigen::MatrixXd& feat, int h, int w, int k, int stride, int pad) {
    const auto cin = feat.rows();
    const int ho = conv_out(h, k, stride, pad);
    const int wo = conv_out(w, k, stride, pad);
    Eigen::MatrixXd col(cin * k * k, ho * wo);
    col.setZero();
    for (int ro = 0; ro < ho; ++ro)
        for (int co = 0; co < wo; ++co) {
            const int out_idx = ro * wo + co;
            for (Eigen::Index ci = 0; ci < cin; ++ci)
                for (int kr = 0; kr < k; ++kr) {
                    const int ri = ro * stride - pad + kr;
                    if (ri < 0 || ri >= h) continue;
                    for (int kc = 0; kc < k; ++kc) {
                        const int c_in = co * stride - pad + kc;
                        if (c_in < 0 || c_in >= w) continue;
                        col((ci * k + kr) * k + kc, out_idx) = feat(ci, ri * w + c_in);
                    }
                }
        }
    return col;
}

void col2im_add(const Eigen::MatrixXd& dcol, Eigen::MatrixXd& dfeat, int h, int w, int k,
                int stride, int pad) {
    const auto cin = dfeat.rows();
    const int ho = conv_out(h, k, stride, pad);
    const int wo = conv_out(w, k, stride, pad);
    for (int ro = 0; ro < ho; ++ro)
        for (int co = 0; co < wo; ++co) {
            const int out_idx = ro * wo + co;
            for (Eigen::Index ci = 0; ci < cin; ++ci)
                for (int kr = 0; kr < k; ++kr) {
                    const int ri = ro * stride - pad + kr;
                    if (ri < 0 || ri >= h) continue;
                    for (int kc = 0; kc < k; ++kc) {
                        const int c_in = co * stride - pad + kc;
                        if (c_in < 0 || c_in >= w) continue;
                        dfeat(ci, ri * w + c_in) += dcol((ci * k + kr) * k + kc, out_idx);
                    }
                }
        }
}

} // namespace

DetectorParams::DetectorParams(const DetectorConfig& cfg) : cfg_(cfg) {
    const int k2 = cfg.kernel * cfg.kernel;
    const std::array<Eigen::Index, 3> cin = {1, cfg.channels[0], cfg.channels[1]};
    Eigen::Index off = 0;
    auto add = [&](const char* name, Eigen::Index rows, Eigen::Index cols, int slot, bool bias) {
        const Eigen::Index len = rows * cols;
        blocks_.push_back({name, off, len});
        if (bias) {
            b_off_[static_cast<std::size_t>(slot)] = off;
            b_len_[static_cast<std::size_t>(slot)] = len;
        } else {
            w_off_[static_cast<std::size_t>(slot)] = off;
            w_shape_[static_cast<std::size_t>(slot)] = {rows, cols};
        }
        off += len;
    };
    static const char* wn[6] = {"conv1_w", "conv2_w", "conv3_w", "obj_w", "cls_w", "box_w"};
    static const char* bn[6] = {"conv1_b", "conv2_b", "conv3_b", "obj_b", "cls_b", "box_b"};
    for (int l = 0; l < 3; ++l) {
        add(wn[l], cfg.channels[static_cast<std::size_t>(l)],
            cin[static_cast<std::size_t>(l)] * k2, l, false);
        add(bn[l], cfg.channels[static_cast<std::size_t>(l)], 1, l, true);
    }
    const Eigen::Index top = cfg.channels[2];
    const std::array<Eigen::Index, 3> head_ch = {1, cfg.num_classes, 4};
    for (int h = 0; h < 3; ++h) {
        add(wn[3 + h], head_ch[static_cast<std::size_t>(h)], top, 3 + h, false);
        add(bn[3 + h], head_ch[static_cast<std::size_t>(h)], 1, 3 + h, true);
    }
    values_ = Eigen::VectorXd::Zero(off);
}

Eigen::Map<Eigen::MatrixXd> DetectorParams::conv_w(int l) {
    const auto& sh = w_shape_[static_cast<std::size_t>(l)];
    return {values_.data() + w_off_[static_cast<std::size_t>(l)], sh.first, sh.second};
}
Eigen::Map<const Eigen::MatrixXd> DetectorParams::conv_w(int l) const {
    const auto& sh = w_shape_[static_cast<std::size_t>(l)];
    return {values_.data() + w_off_[static_cast<std::size_t>(l)], sh.first, sh.second};
}
Eigen::Map<Eigen::VectorXd> DetectorParams::conv_b(int l) {
    return {values_.data() + b_off_[static_cast<std::size_t>(l)],
            b_len_[static_cast<std::size_t>(l)]};
}
Eigen::Map<const Eigen::VectorXd> DetectorParams::conv_b(int l) const {
    return {values_.data() + b_off_[static_cast<std::size_t>(l)],
            b_len_[static_cast<std::size_t>(l)]};
}
Eigen::Map<Eigen::MatrixXd> DetectorParams::head_w(int h) { return conv_w(3 + h); }
Eigen::Map<const Eigen::MatrixXd> DetectorParams::head_w(int h) const { return conv_w(3 + h); }
Eigen::Map<Eigen::VectorXd> DetectorParams::head_b(int h) { return conv_b(3 + h); }
Eigen::Map<const Eigen::VectorXd> DetectorParams::head_b(int h) const { return conv_b(3 + h); }

void DetectorParams::round_to_f32() {
    for (Eigen::Index i = 0; i < values_.size(); ++i)
        values_[i] = static_cast<double>(static_cast<float>(values_[i]));
}

DetectorParams init_params(const DetectorConfig& cfg, Rng& rng) {
    DetectorParams p(cfg);
    const int k2 = cfg.kernel * cfg.kernel;
    const std::array<Eigen::Index, 3> cin = {1, cfg.channels[0], cfg.channels[1]};
    for (int l = 0; l < 3; ++l) {
        auto w = p.conv_w(l);
        const double s = std::sqrt(2.0 / static_cast<double>(cin[static_cast<std::size_t>(l)] * k2));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = s * rng.normal();
    }
    const double top = static_cast<double>(cfg.channels[2]);
    const std::array<double, 3> head_scale = {std::sqrt(1.0 / top), std::sqrt(1.0 / top),
                                              0.1 * std::sqrt(1.0 / top)};
    for (int h = 0; h < 3; ++h) {
        auto w = p.head_w(h);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                w(r, c) = head_scale[static_cast<std::size_t>(h)] * rng.normal();
    }
    p.head_b(0)(0) = -2.0; // start close to all-background
    p.round_to_f32();
    return p;
}

ForwardTrace forward_trace(const DetectorParams& params, const ImageD& normalized) {
    const DetectorConfig& cfg = params.config();
    if (normalized.rows() != cfg.input_height || normalized.cols() != cfg.input_width)
        throw ValidationError("forward: unexpected image shape");
    ForwardTrace t;
    t.input = normalized;
    Eigen::MatrixXd feat(1, normalized.size());
    for (Eigen::Index i = 0; i < normalized.size(); ++i) feat(0, i) = normalized.data()[i];
    int h = cfg.input_height, w = cfg.input_width;
    for (int l = 0; l < 3; ++l) {
        auto& col = t.cols[static_cast<std::size_t>(l)];
        col = im2col(feat, h, w, cfg.kernel, cfg.stride, cfg.pad);
        auto& pre = t.pre[static_cast<std::size_t>(l)];
        pre = params.conv_w(l) * col;
        pre.colwise() += params.conv_b(l);
        t.act[static_cast<std::size_t>(l)] = pre.cwiseMax(0.0);
        feat = t.act[static_cast<std::size_t>(l)];
        h = conv_out(h, cfg.kernel, cfg.stride, cfg.pad);
        w = conv_out(w, cfg.kernel, cfg.stride, cfg.pad);
    }
    t.head.gh = h;
    t.head.gw = w;
    t.head.obj = (params.head_w(0) * feat).row(0).transpose();
    t.head.obj.array() += params.head_b(0)(0);
    t.head.cls = params.head_w(1) * feat;
    t.head.cls.colwise() += params.head_b(1);
    t.head.box = params.head_w(2) * feat;
    t.head.box.colwise() += params.head_b(2);
    return t;
}

HeadOutput forward(const DetectorParams& params, const ImageD& normalized) {
    return forward_trace(params, normalized).head;
}

void backward(const DetectorParams& params, const ForwardTrace& trace, const HeadGrad& dhead,
              Eigen::VectorXd& grad) {
    const DetectorConfig& cfg = params.config();
    const auto& blocks = params.blocks();
    if (grad.size() != params.size()) throw ValidationError("backward: gradient size mismatch");
    auto gmap = [&](int slot) {
        const auto& b = blocks[static_cast<std::size_t>(slot)];
        return Eigen::Map<Eigen::VectorXd>(grad.data() + b.offset, b.length);
    };
    auto add_flat = [&](int slot, const Eigen::MatrixXd& m) {
        gmap(slot) += Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    };

    const Eigen::MatrixXd& top = trace.act[2];
    // head parameter grads
    {
        add_flat(6, dhead.obj.transpose() * top.transpose());
        gmap(7)(0) += dhead.obj.sum();
        add_flat(8, dhead.cls * top.transpose());
        gmap(9) += dhead.cls.rowwise().sum();
        add_flat(10, dhead.box * top.transpose());
        gmap(11) += dhead.box.rowwise().sum();
    }

    Eigen::MatrixXd dfeat = params.head_w(0).transpose() * dhead.obj.transpose() +
                            params.head_w(1).transpose() * dhead.cls +
                            params.head_w(2).transpose() * dhead.box;

    std::array<int, 4> hs{}, ws{};
    hs[0] = cfg.input_height;
    ws[0] = cfg.input_width;
    for (int l = 0; l < 3; ++l) {
        hs[static_cast<std::size_t>(l + 1)] =
            conv_out(hs[static_cast<std::size_t>(l)], cfg.kernel, cfg.stride, cfg.pad);
        ws[static_cast<std::size_t>(l + 1)] =
            conv_out(ws[static_cast<std::size_t>(l)], cfg.kernel, cfg.stride, cfg.pad);
    }

    for (int l = 2; l >= 0; --l) {
        const auto lu = static_cast<std::size_t>(l);
        Eigen::MatrixXd dpre =
            dfeat.cwiseProduct((trace.pre[lu].array() > 0.0).cast<double>().matrix());
        add_flat(2 * l, dpre * trace.cols[lu].transpose());
        gmap(2 * l + 1) += dpre.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd dcol = params.conv_w(l).transpose() * dpre;
            Eigen::MatrixXd prev = Eigen::MatrixXd::Zero(
                cfg.channels[static_cast<std::size_t>(l - 1)],
                static_cast<Eigen::Index>(hs[lu]) * ws[lu]);
            col2im_add(dcol, prev, hs[lu], ws[lu], cfg.kernel, cfg.stride, cfg.pad);
            dfeat = prev;
        }
    }
}

BBox anchor_box(const DetectorConfig& cfg, int cell) {
    const int row = cell / cfg.grid_w(), col = cell % cfg.grid_w();
    const double cs = cfg.cell_size();
    const double cx = (col + 0.5) * cs, cy = (row + 0.5) * cs;
    return {cx - cfg.anchor_size / 2.0, cy - cfg.anchor_size / 2.0, cfg.anchor_size,
            cfg.anchor_size};
}

Eigen::Vector4d encode_box(const DetectorConfig& cfg, int cell, const BBox& box) {
    const int row = cell / cfg.grid_w(), col = cell % cfg.grid_w();
    const double cs = cfg.cell_size();
    Eigen::Vector4d d;
    d[0] = (box.cx() - (col + 0.5) * cs) / cs;
    d[1] = (box.cy() - (row + 0.5) * cs) / cs;
    d[2] = std::log(box.w / cfg.anchor_size);
    d[3] = std::log(box.h / cfg.anchor_size);
    return d;
}

BBox decode_box(const DetectorConfig& cfg, int cell, const Eigen::Vector4d& deltas) {
    const int row = cell / cfg.grid_w(), col = cell % cfg.grid_w();
    const double cs = cfg.cell_size();
    const double cx = (col + 0.5) * cs + deltas[0] * cs;
    const double cy = (row + 0.5) * cs + deltas[1] * cs;
    const double w = cfg.anchor_size * std::exp(std::clamp(deltas[2], -10.0, 6.0));
    const double h = cfg.anchor_size * std::exp(std::clamp(deltas[3], -10.0, 6.0));
    return {cx - w / 2.0, cy - h / 2.0, w, h};
}

std::vector<ScoredBox> decode(const DetectorConfig& cfg, const HeadOutput& head, double conf_floor,
                              double nms_thresh) {
    std::vector<ScoredBox> dets;
    const double iw = cfg.input_width, ih = cfg.input_height;
    for (int i = 0; i < cfg.cells(); ++i) {
        const double p_obj = sigmoid(head.obj[i]);
        if (p_obj < conf_floor) continue; // class factor can only shrink the score
        Eigen::VectorXd logits = head.cls.col(i);
        const double m = logits.maxCoeff();
        Eigen::VectorXd p = (logits.array() - m).exp();
        p /= p.sum();
        const BBox raw = decode_box(cfg, i, head.box.col(i));
        const double x0 = std::max(raw.x, 0.0), y0 = std::max(raw.y, 0.0);
        const double x1 = std::min(raw.right(), iw), y1 = std::min(raw.bottom(), ih);
        if (x1 <= x0 || y1 <= y0) continue;
        const BBox clipped{x0, y0, x1 - x0, y1 - y0};
        for (int k = 0; k < cfg.num_classes; ++k) {
            const double score = p_obj * p[k];
            if (score >= conf_floor) dets.push_back({clipped, k + 1, score});
        }
    }
    return nms(dets, nms_thresh);
}

CellTargets assign_targets(const DetectorConfig& cfg, const std::vector<GtBox>& gts) {
    CellTargets t;
    t.gh = cfg.grid_h();
    t.gw = cfg.grid_w();
    const int n = cfg.cells();
    t.state = Eigen::VectorXi::Zero(n);
    t.cls.assign(static_cast<std::size_t>(n), 0);
    t.deltas = Eigen::MatrixXd::Zero(4, n);

    for (int i = 0; i < n; ++i) {
        const BBox anchor = anchor_box(cfg, i);
        for (const auto& g : gts)
            if (iou(anchor, g.box) >= cfg.neg_iou_thresh) {
                t.state[i] = -1;
                break;
            }
    }

    std::vector<double> best_area(static_cast<std::size_t>(n), -1.0);
    for (const auto& g : gts) {
        const double cs = cfg.cell_size();
        const int col = std::clamp(static_cast<int>(std::floor(g.box.cx() / cs)), 0, t.gw - 1);
        const int row = std::clamp(static_cast<int>(std::floor(g.box.cy() / cs)), 0, t.gh - 1);
        const int cell = row * t.gw + col;
        if (g.box.area() > best_area[static_cast<std::size_t>(cell)]) {
            best_area[static_cast<std::size_t>(cell)] = g.box.area();
            t.state[cell] = 1;
            t.cls[static_cast<std::size_t>(cell)] = g.class_id;
            t.deltas.col(cell) = encode_box(cfg, cell, g.box);
        }
    }
    for (int i = 0; i < n; ++i) {
        if (t.state[i] == 1)
            ++t.positives;
        else if (t.state[i] == 0)
            ++t.negatives;
    }
    return t;
}

LossTerms detection_loss(const DetectorConfig& cfg, const HeadOutput& head,
                         const CellTargets& targets, const Eigen::VectorXd* neg_weights,
                         bool with_obj_cls, bool with_box) {
    const int n = cfg.cells();
    LossTerms out;
    out.dhead.obj = Eigen::VectorXd::Zero(n);
    out.dhead.cls = Eigen::MatrixXd::Zero(cfg.num_classes, n);
    out.dhead.box = Eigen::MatrixXd::Zero(4, n);

    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    if (neg_weights) {
        double sum = 0.0;
        int count = 0;
        for (int i = 0; i < n; ++i)
            if (targets.state[i] == 0) {
                sum += (*neg_weights)[i];
                ++count;
            }
        const double mean = count > 0 ? sum / count : 0.0;
        for (int i = 0; i < n; ++i)
            if (targets.state[i] == 0) w[i] = mean > 0.0 ? (*neg_weights)[i] / mean : 0.0;
    }

    if (with_obj_cls) {
        const int scored = targets.positives + targets.negatives;
        if (scored > 0) {
            for (int i = 0; i < n; ++i) {
                if (targets.state[i] < 0) continue;
                const double target = targets.state[i] == 1 ? 1.0 : 0.0;
                const double weight = targets.state[i] == 1 ? 1.0 : w[i];
                out.obj += weight * bce_logit(head.obj[i], target) / scored;
                out.dhead.obj[i] = weight * (sigmoid(head.obj[i]) - target) / scored;
            }
        }
        if (targets.positives > 0) {
            for (int i = 0; i < n; ++i) {
                if (targets.state[i] != 1) continue;
                Eigen::VectorXd logits = head.cls.col(i);
                const double m = logits.maxCoeff();
                Eigen::VectorXd p = (logits.array() - m).exp();
                const double z = p.sum();
                p /= z;
                const int target = targets.cls[static_cast<std::size_t>(i)] - 1;
                out.cls += -(logits[target] - m - std::log(z)) / targets.positives;
                Eigen::VectorXd d = p;
                d[target] -= 1.0;
                out.dhead.cls.col(i) = d / targets.positives;
            }
        }
    }

    if (with_box && targets.positives > 0) {
        for (int i = 0; i < n; ++i) {
            if (targets.state[i] != 1) continue;
            for (int k = 0; k < 4; ++k) {
                const double r = head.box(k, i) - targets.deltas(k, i);
                const double a = std::abs(r);
                out.box += (a < 1.0 ? 0.5 * r * r : a - 0.5) / targets.positives;
                out.dhead.box(k, i) = (a < 1.0 ? r : (r > 0 ? 1.0 : -1.0)) / targets.positives;
            }
        }
    }

    out.total = out.obj + out.cls + out.box;
    return out;
}

double lr_at(const TrainConfig& cfg, int iteration) {
    int passed = 0;
    for (int m : cfg.scheduler_steps)
        if (iteration >= m) ++passed;
    return cfg.learning_rate * std::pow(cfg.scheduler_factor, passed);
}

void sgd_step(DetectorParams& params, Eigen::VectorXd& velocity, const Eigen::VectorXd& grads,
              const TrainConfig& cfg, int iteration) {
    if (velocity.size() != params.size() || grads.size() != params.size())
        throw ValidationError("sgd_step: shape mismatch");
    velocity = cfg.momentum * velocity + (grads + cfg.weight_decay * params.values());
    params.values() -= lr_at(cfg, iteration) * velocity;
    params.round_to_f32();
}

double grad_check(const DetectorParams& params, const ImageD& normalized,
                  const std::vector<GtBox>& gts, int n_checks, Rng& rng) {
    const DetectorConfig& cfg = params.config();
    const CellTargets targets = assign_targets(cfg, gts);
    auto loss_at = [&](const DetectorParams& p) {
        const ForwardTrace t = forward_trace(p, normalized);
        return detection_loss(cfg, t.head, targets).total;
    };

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
    {
        const ForwardTrace t = forward_trace(params, normalized);
        const LossTerms l = detection_loss(cfg, t.head, targets);
        backward(params, t, l.dhead, grad);
    }

    const auto& blocks = params.blocks();
    if (blocks.empty() || n_checks <= 0) return 0.0;
    const int per_block =
        (n_checks + static_cast<int>(blocks.size()) - 1) / static_cast<int>(blocks.size());
    DetectorParams probe = params;
    // small enough that relu kink crossings stay far below the 1e-4 gate,
    // large enough that double-precision cancellation noise does too
    const double eps = 1e-5;
    double worst = 0.0;
    for (const auto& b : blocks) {
        for (int j = 0; j < per_block; ++j) {
            const Eigen::Index i =
                b.offset + static_cast<Eigen::Index>(rng.uniform_int(static_cast<uint64_t>(b.length)));
            const double saved = probe.values()[i];
            probe.values()[i] = saved + eps;
            const double up = loss_at(probe);
            probe.values()[i] = saved - eps;
            const double down = loss_at(probe);
            probe.values()[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double a = grad[i];
            const double rel =
                std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-2});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

ImageD normalize(const Image16& image, const NormStats& stats) {
    ImageD out(image.rows(), image.cols());
    for (Eigen::Index i = 0; i < image.size(); ++i)
        out.data()[i] = (static_cast<double>(image.data()[i]) - stats.mean) / stats.stdev;
    return out;
}

NormStats compute_norm_stats(const std::vector<const Image16*>& images) {
    double sum = 0.0, sq = 0.0;
    long n = 0;
    for (const auto* img : images) {
        for (Eigen::Index i = 0; i < img->size(); ++i) {
            const double v = static_cast<double>(img->data()[i]);
            sum += v;
            sq += v * v;
        }
        n += img->size();
    }
    NormStats s;
    if (n == 0) return s;
    s.mean = sum / static_cast<double>(n);
    const double var = std::max(sq / static_cast<double>(n) - s.mean * s.mean, 1e-12);
    s.stdev = std::sqrt(var);
    return s;
}

} // namespace irdet
