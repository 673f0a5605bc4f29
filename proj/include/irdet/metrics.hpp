#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "irdet/geometry.hpp"

namespace irdet {

// Detections below this confidence are discarded before any evaluation.
constexpr double kScoreFloor = 1e-3;

constexpr int kNumIouThresholds = 10;

inline std::array<double, kNumIouThresholds> iou_thresholds() {
    std::array<double, kNumIouThresholds> t{};
    for (int i = 0; i < kNumIouThresholds; ++i) t[i] = 0.50 + 0.05 * i;
    return t;
}

// AP grid over (class, IoU threshold). NaN cells mark classes with no ground
// truth in the evaluation set; those are excluded from the mean.
struct EvalResult {
    Eigen::MatrixXd ap; // kNumClasses x kNumIouThresholds, NaN = absent
    double map = 0.0;

    bool class_present(int class_id) const { return !std::isnan(ap(class_id - 1, 0)); }
};

using ImageDets = std::vector<ScoredBox>;
using ImageGts = std::vector<GtBox>;

// 101-point interpolated AP for one class at one IoU threshold; nullopt when
// the class has no ground truth. Images are paired by index.
std::optional<double> average_precision(const std::vector<ImageDets>& dets,
                                        const std::vector<ImageGts>& gts, int class_id,
                                        double iou_thresh);

// mAP over the 10-threshold grid; throws ValidationError when gts contain no
// boxes at all.
EvalResult coco_map(const std::vector<ImageDets>& dets, const std::vector<ImageGts>& gts);

// Raw cumulative (recall, precision) points in descending-score order, before
// interpolation. Empty when the class has no detections.
std::vector<std::pair<double, double>> emit_pr_curve(const std::vector<ImageDets>& dets,
                                                     const std::vector<ImageGts>& gts, int class_id,
                                                     double iou_thresh);

} // namespace irdet
