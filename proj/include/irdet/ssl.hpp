#pragma once

#include <cstdint>
#include <vector>

#include "irdet/augment.hpp"
#include "irdet/detector.hpp"
#include "irdet/synthir.hpp"

namespace irdet {

// Teacher-student training: supervised burn-in, per-iteration EMA teacher,
// confidence-thresholded pseudo-labels from a weak view, soft background
// weighting, jitter-stability filtering of regression targets.

struct SslConfig {
    double lambda_unsup = 4.0;
    double ema_alpha = 0.999;
    double pseudo_conf_thresh = 0.9;
    int jitter_count = 10;
    double jitter_scale = 0.06;       // fraction of box size
    double jitter_var_thresh = 0.02;  // variance in box-size units
    int labelled_per_batch = 4;
    int unlabelled_per_batch = 16;
    TrainConfig burn_in;              // defaults: lr 5e-3, 8000 iters
    TrainConfig ssl;                  // lr 5e-4, shorter schedule
    int fine_tune_iterations = -1;    // negative: burn_in.total_iterations / 8

    SslConfig() {
        ssl.learning_rate = 5e-4;
        ssl.total_iterations = 4000;
        ssl.scheduler_steps = {2000, 2667};
        ssl.batch_size = labelled_per_batch + unlabelled_per_batch;
    }
    int resolved_fine_tune_iterations() const {
        return fine_tune_iterations >= 0 ? fine_tune_iterations : burn_in.total_iterations / 8;
    }
    void validate() const; // throws ConfigError
};

struct TeacherState {
    DetectorParams params; // EMA copy of the student, never touched by gradients
};

struct TrainLogRow {
    int iteration = 0;
    double l_sup = 0.0;
    double l_unsup_cls = 0.0;
    double l_unsup_reg = 0.0;
    double lr = 0.0;
    int n_pseudo = 0;
};
using TrainLog = std::vector<TrainLogRow>;

void write_train_log_csv(const TrainLog& log, const std::string& path);

// teacher <- alpha * teacher + (1 - alpha) * student, elementwise
void ema_update(TeacherState& teacher, const DetectorParams& student, double alpha);

// Bilinear lookup of a per-cell scalar field at pixel coords, grid nodes at
// cell centers, border clamped.
double sample_cell_field(const Eigen::VectorXd& field, int gh, int gw, double cell_size, double x,
                         double y);

// Box the teacher's regression field predicts around query point (x, y):
// delta channels sampled bilinearly over cell centers, then decoded as if the
// query point were a cell center. At an exact cell center this matches
// decode_box for that cell.
BBox reregress_at(const DetectorConfig& cfg, const HeadOutput& head, double x, double y);

Eigen::VectorXd background_prob_field(const HeadOutput& head); // 1 - sigmoid(objectness)

struct PseudoCandidate {
    ScoredBox box;          // un-augmented image frame
    double stability = 0.0; // mean per-coordinate variance under jitter
};

struct PseudoLabels {
    std::vector<PseudoCandidate> candidates;
    HeadOutput weak_head;             // teacher output on the weak view
    std::vector<AugStep> weak_applied;
};

// Weak-augments the image (consuming weak_rng), runs the teacher, keeps
// detections scoring >= pseudo_conf_thresh, measures jitter stability in the
// weak frame (consuming jitter_rng), and maps boxes back through the inverse
// weak transform.
PseudoLabels pseudo_label(const DetectorConfig& dcfg, const DetectorParams& teacher,
                          const NormStats& stats, const Image16& image, const SslConfig& cfg,
                          Rng& weak_rng, Rng& jitter_rng);

// Objectness + class terms on pseudo-boxes; each negative cell weighted by
// neg_weights (renormalized to mean 1 over negatives inside).
LossTerms unsup_cls_loss(const DetectorConfig& cfg, const HeadOutput& student_head,
                         const std::vector<GtBox>& pseudo_boxes,
                         const Eigen::VectorXd& neg_weights);

// Smooth-L1 box term toward jitter-stable pseudo-boxes only.
LossTerms unsup_reg_loss(const DetectorConfig& cfg, const HeadOutput& student_head,
                         const std::vector<GtBox>& stable_boxes);

// Weak (zoom + flip) then one photometric op, driven by one rng.
AugmentedSample augment_labelled(const Image16& image, const std::vector<GtBox>& boxes, Rng& rng);
// Weak, photometric, then translate + shear + cutouts.
AugmentedSample augment_strong(const Image16& image, const std::vector<GtBox>& boxes, Rng& rng);

struct TrainedModel {
    DetectorParams params;
    NormStats stats;
};

// Plain supervised SGD from the given starting point. Per-iteration rng
// streams are derived from seed, so a run is reproducible independent of the
// starting params' history.
DetectorParams train_supervised(const DetectorConfig& dcfg, DetectorParams params,
                                const std::vector<Sample>& labelled, const TrainConfig& cfg,
                                const NormStats& stats, uint64_t seed, TrainLog* log = nullptr);

// Fresh init + supervised training. stats == nullptr computes them from the
// labelled images.
TrainedModel train_burn_in(const DetectorConfig& dcfg, const std::vector<Sample>& labelled,
                           const TrainConfig& cfg, uint64_t seed, TrainLog* log = nullptr,
                           const NormStats* stats = nullptr);

// Continue training on a new labelled set with fresh velocity.
DetectorParams fine_tune(const DetectorConfig& dcfg, DetectorParams params,
                         const std::vector<Sample>& labelled, const TrainConfig& cfg,
                         const NormStats& stats, uint64_t seed, TrainLog* log = nullptr);

// Mixed-batch teacher-student loop. Returns true if it warned about an empty
// unlabelled set and ran as plain supervised training.
bool train_ssl(const DetectorConfig& dcfg, DetectorParams& student, TeacherState& teacher,
               const std::vector<Sample>& labelled, const std::vector<Sample>& unlabelled,
               const SslConfig& cfg, const NormStats& stats, uint64_t seed,
               TrainLog* log = nullptr);

// Burn-in on all labels, then teacher-student training with unlabelled data.
TrainedModel method1(const DetectorConfig& dcfg, const std::vector<Sample>& labelled,
                     const std::vector<Sample>& unlabelled, const SslConfig& cfg, uint64_t seed,
                     TrainLog* log = nullptr);

// Burn-in on the first campaign's labels, fine-tune on the second's, then
// teacher-student training with both label sets and the unlabelled pool.
TrainedModel method2(const DetectorConfig& dcfg, const std::vector<Sample>& labelled_a,
                     const std::vector<Sample>& labelled_b, const std::vector<Sample>& unlabelled,
                     const SslConfig& cfg, uint64_t seed, TrainLog* log = nullptr);

} // namespace irdet
