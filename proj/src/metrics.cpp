#include "irdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "irdet/errors.hpp"

namespace irdet {

namespace {

struct FlatDet {
    int image = 0;
    ScoredBox det;
    bool matched = false;
};

// Per class: filter by score floor and class, match per image, then order
// globally by (score desc, image, x, y).
std::vector<FlatDet> matched_dets(const std::vector<ImageDets>& dets,
                                  const std::vector<ImageGts>& gts, int class_id,
                                  double iou_thresh) {
    std::vector<FlatDet> flat;
    for (std::size_t img = 0; img < dets.size(); ++img) {
        ImageDets keep;
        for (const auto& d : dets[img])
            if (d.score >= kScoreFloor && d.class_id == class_id) keep.push_back(d);
        ImageGts gt_keep;
        if (img < gts.size())
            for (const auto& g : gts[img])
                if (g.class_id == class_id) gt_keep.push_back(g);
        auto matches = greedy_match(keep, gt_keep, iou_thresh);
        for (const auto& [di, gi] : matches)
            flat.push_back({static_cast<int>(img), keep[di], gi >= 0});
    }
    std::stable_sort(flat.begin(), flat.end(), [](const FlatDet& a, const FlatDet& b) {
        if (a.det.score != b.det.score) return a.det.score > b.det.score;
        if (a.image != b.image) return a.image < b.image;
        if (a.det.box.x != b.det.box.x) return a.det.box.x < b.det.box.x;
        return a.det.box.y < b.det.box.y;
    });
    return flat;
}

std::size_t count_gts(const std::vector<ImageGts>& gts, int class_id) {
    std::size_t n = 0;
    for (const auto& img : gts)
        for (const auto& g : img)
            if (g.class_id == class_id) ++n;
    return n;
}

} // namespace

std::vector<std::pair<double, double>> emit_pr_curve(const std::vector<ImageDets>& dets,
                                                     const std::vector<ImageGts>& gts, int class_id,
                                                     double iou_thresh) {
    const double n_gt = static_cast<double>(count_gts(gts, class_id));
    auto flat = matched_dets(dets, gts, class_id, iou_thresh);
    std::vector<std::pair<double, double>> curve;
    double tp = 0, fp = 0;
    for (const auto& f : flat) {
        (f.matched ? tp : fp) += 1;
        const double recall = n_gt > 0 ? tp / n_gt : 0.0;
        curve.emplace_back(recall, tp / (tp + fp));
    }
    return curve;
}

std::optional<double> average_precision(const std::vector<ImageDets>& dets,
                                        const std::vector<ImageGts>& gts, int class_id,
                                        double iou_thresh) {
    const std::size_t n_gt = count_gts(gts, class_id);
    if (n_gt == 0) return std::nullopt;
    auto curve = emit_pr_curve(dets, gts, class_id, iou_thresh);

    // Precision envelope: running max from the right over the raw points,
    // then sample at recalls 0.00, 0.01, ..., 1.00.
    for (std::size_t i = curve.size(); i-- > 1;)
        curve[i - 1].second = std::max(curve[i - 1].second, curve[i].second);

    double sum = 0.0;
    std::size_t lo = 0;
    for (int r = 0; r <= 100; ++r) {
        const double recall = r / 100.0;
        while (lo < curve.size() && curve[lo].first < recall - 1e-12) ++lo;
        if (lo < curve.size()) sum += curve[lo].second;
    }
    return sum / 101.0;
}

EvalResult coco_map(const std::vector<ImageDets>& dets, const std::vector<ImageGts>& gts) {
    std::size_t total_gt = 0;
    for (const auto& img : gts) total_gt += img.size();
    if (total_gt == 0) throw ValidationError("coco_map: no ground truth boxes");

    const auto thresholds = iou_thresholds();
    EvalResult res;
    res.ap.setConstant(kNumClasses, kNumIouThresholds, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    int cells = 0;
    for (int c = 1; c <= kNumClasses; ++c) {
        for (int t = 0; t < kNumIouThresholds; ++t) {
            auto ap = average_precision(dets, gts, c, thresholds[t]);
            if (!ap) break;
            res.ap(c - 1, t) = *ap;
            sum += *ap;
            ++cells;
        }
    }
    res.map = cells > 0 ? sum / cells : 0.0;
    return res;
}

} // namespace irdet
