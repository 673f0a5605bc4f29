#include "irdet/geometry.hpp"

#include <algorithm>
#include <numeric>

#include "irdet/errors.hpp"

namespace irdet {

double iou(const BBox& a, const BBox& b) {
    const double ix = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    const double iy = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
}

bool det_order_less(const ScoredBox& a, const ScoredBox& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (a.box.x != b.box.x) return a.box.x < b.box.x;
    return a.box.y < b.box.y;
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& dets, double iou_thresh) {
    if (!(iou_thresh > 0.0 && iou_thresh <= 1.0))
        throw ValidationError("nms: iou_thresh must be in (0, 1]");
    std::vector<ScoredBox> sorted = dets;
    std::stable_sort(sorted.begin(), sorted.end(), det_order_less);
    std::vector<ScoredBox> kept;
    kept.reserve(sorted.size());
    for (const ScoredBox& cand : sorted) {
        bool suppressed = false;
        for (const ScoredBox& k : kept) {
            if (k.class_id == cand.class_id && iou(k.box, cand.box) >= iou_thresh) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

std::vector<std::pair<int, int>> greedy_match(const std::vector<ScoredBox>& dets,
                                              const std::vector<GtBox>& gts, double iou_thresh) {
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return det_order_less(dets[a], dets[b]); });

    std::vector<char> gt_used(gts.size(), 0);
    std::vector<std::pair<int, int>> matches;
    matches.reserve(dets.size());
    for (int di : order) {
        int best_gt = -1;
        double best_iou = 0.0;
        for (size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_used[gi] || gts[gi].class_id != dets[di].class_id) continue;
            const double v = iou(dets[di].box, gts[gi].box);
            if (v >= iou_thresh && v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0) gt_used[best_gt] = 1;
        matches.emplace_back(di, best_gt);
    }
    return matches;
}

} // namespace irdet
