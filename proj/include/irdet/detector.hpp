#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "irdet/geometry.hpp"
#include "irdet/image.hpp"
#include "irdet/rng.hpp"

namespace irdet {

// Three stride-2 5x5 conv stages then 1x1 heads on the 8x10 cell grid; one
// square anchor per cell.
struct DetectorConfig {
    int input_height = 64, input_width = 80;
    std::array<int, 3> channels = {6, 12, 24};
    int kernel = 5, stride = 2, pad = 2;
    int num_classes = kNumClasses;
    double anchor_size = 12.0;
    double neg_iou_thresh = 0.3;
    double conf_floor = 1e-3;
    double nms_thresh = 0.5;

    int grid_h() const { return input_height / (stride * stride * stride); }
    int grid_w() const { return input_width / (stride * stride * stride); }
    int cells() const { return grid_h() * grid_w(); }
    // one grid cell covers this many input pixels per side
    double cell_size() const { return static_cast<double>(stride * stride * stride); }
};

// All weights live in one flat vector (EMA, checkpoints, and SGD act on it);
// layer views are Maps into it. Values are kept float32-representable so
// float checkpoints round-trip bit-exactly; arithmetic stays double.
class DetectorParams {
public:
    explicit DetectorParams(const DetectorConfig& cfg);

    const DetectorConfig& config() const { return cfg_; }
    Eigen::VectorXd& values() { return values_; }
    const Eigen::VectorXd& values() const { return values_; }
    Eigen::Index size() const { return values_.size(); }

    // conv weight matrix for stage l (0..2): C_out x (C_in * k * k)
    Eigen::Map<Eigen::MatrixXd> conv_w(int l);
    Eigen::Map<const Eigen::MatrixXd> conv_w(int l) const;
    Eigen::Map<Eigen::VectorXd> conv_b(int l);
    Eigen::Map<const Eigen::VectorXd> conv_b(int l) const;
    // head weight matrices: rows = output channels, cols = top feature planes
    Eigen::Map<Eigen::MatrixXd> head_w(int h); // 0 objectness, 1 classes, 2 boxes
    Eigen::Map<const Eigen::MatrixXd> head_w(int h) const;
    Eigen::Map<Eigen::VectorXd> head_b(int h);
    Eigen::Map<const Eigen::VectorXd> head_b(int h) const;

    // named (offset, length) blocks in declaration order
    struct Block {
        const char* name;
        Eigen::Index offset, length;
    };
    const std::vector<Block>& blocks() const { return blocks_; }

    void round_to_f32();

private:
    DetectorConfig cfg_;
    Eigen::VectorXd values_;
    std::vector<Block> blocks_;
    std::array<Eigen::Index, 6> w_off_{}, b_off_{};
    std::array<std::pair<Eigen::Index, Eigen::Index>, 6> w_shape_{};
    std::array<Eigen::Index, 6> b_len_{};
};

// He-normal conv weights, zero biases except a negative objectness bias so
// the initial model predicts background nearly everywhere
DetectorParams init_params(const DetectorConfig& cfg, Rng& rng);

struct HeadOutput {
    int gh = 0, gw = 0;
    Eigen::VectorXd obj;  // cells, logits
    Eigen::MatrixXd cls;  // num_classes x cells, logits
    Eigen::MatrixXd box;  // 4 x cells: dx, dy in cell units, log w/h vs anchor
};

// activations kept for the backward pass
struct ForwardTrace {
    ImageD input;
    std::array<Eigen::MatrixXd, 3> cols; // im2col inputs per stage
    std::array<Eigen::MatrixXd, 3> pre;  // pre-activation per stage
    std::array<Eigen::MatrixXd, 3> act;  // post-ReLU per stage
    HeadOutput head;
};

ForwardTrace forward_trace(const DetectorParams& params, const ImageD& normalized);
HeadOutput forward(const DetectorParams& params, const ImageD& normalized);

// gradient of a scalar loss w.r.t. the head fields
struct HeadGrad {
    Eigen::VectorXd obj;
    Eigen::MatrixXd cls;
    Eigen::MatrixXd box;
};

// accumulates d(loss)/d(params) into grad (flat, same layout as params)
void backward(const DetectorParams& params, const ForwardTrace& trace, const HeadGrad& dhead,
              Eigen::VectorXd& grad);

// box center offsets are measured from this cell's anchor center
BBox anchor_box(const DetectorConfig& cfg, int cell);
Eigen::Vector4d encode_box(const DetectorConfig& cfg, int cell, const BBox& box);
BBox decode_box(const DetectorConfig& cfg, int cell, const Eigen::Vector4d& deltas);

std::vector<ScoredBox> decode(const DetectorConfig& cfg, const HeadOutput& head, double conf_floor,
                              double nms_thresh);

// Per-cell assignment: the cell containing a gt center is positive (largest
// gt area wins a shared cell), cells whose anchor overlaps every gt below
// neg_iou_thresh are negative, the rest are ignored.
struct CellTargets {
    int gh = 0, gw = 0;
    Eigen::VectorXi state;    // per cell: 1 positive, 0 negative, -1 ignored
    std::vector<int> cls;     // per cell, valid at positives
    Eigen::MatrixXd deltas;   // 4 x cells, valid at positives
    int positives = 0, negatives = 0;
};

CellTargets assign_targets(const DetectorConfig& cfg, const std::vector<GtBox>& gts);

struct LossTerms {
    double total = 0, obj = 0, cls = 0, box = 0;
    HeadGrad dhead;
};

// BCE on objectness over scored cells + CE over positives + smooth L1
// (beta 1) over positives, each term mean-normalized by its own count.
// neg_weights, when given, scales each negative cell's BCE contribution
// (renormalized to mean 1 over negatives). Term switches support the
// classification-only and regression-only unsupervised losses.
LossTerms detection_loss(const DetectorConfig& cfg, const HeadOutput& head,
                         const CellTargets& targets, const Eigen::VectorXd* neg_weights = nullptr,
                         bool with_obj_cls = true, bool with_box = true);

struct TrainConfig {
    double learning_rate = 5e-3;
    int batch_size = 16;
    int total_iterations = 8000;
    std::vector<int> scheduler_steps = {4000, 5333};
    double scheduler_factor = 0.1;
    double weight_decay = 1e-4;
    double momentum = 0.9;
};

double lr_at(const TrainConfig& cfg, int iteration);

// v <- momentum v + (g + wd p); p <- p - lr_t v; then p rounded back to
// float32-representable values
void sgd_step(DetectorParams& params, Eigen::VectorXd& velocity, const Eigen::VectorXd& grads,
              const TrainConfig& cfg, int iteration);

// max relative error between analytic and central finite differences
// (eps 1e-5) on n_checks parameters spread over every block
double grad_check(const DetectorParams& params, const ImageD& normalized,
                  const std::vector<GtBox>& gts, int n_checks, Rng& rng);

struct NormStats {
    double mean = 0.0, stdev = 1.0;
};

ImageD normalize(const Image16& image, const NormStats& stats);
NormStats compute_norm_stats(const std::vector<const Image16*>& images);

} // namespace irdet
