#pragma once

#include <cmath>
#include <utility>
#include <vector>

namespace irdet {

constexpr int kNumClasses = 7;

// Axis-aligned box, upper-left corner convention. Coordinates are continuous;
// rasterization happens only in rendering.
struct BBox {
    double x = 0, y = 0, w = 0, h = 0;

    double right() const { return x + w; }
    double bottom() const { return y + h; }
    double area() const { return w * h; }
    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }

    bool valid() const {
        return w > 0 && h > 0 && std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
               std::isfinite(h);
    }
};

struct ScoredBox {
    BBox box;
    int class_id = 1; // 1..7
    double score = 0; // [0, 1]
};

struct GtBox {
    BBox box;
    int class_id = 1;
};

double iou(const BBox& a, const BBox& b);

// Per-class NMS. Output is sorted by descending score with tie-break
// (class_id, x, y); a box is kept iff IoU < iou_thresh against every
// already-kept box of the same class.
std::vector<ScoredBox> nms(const std::vector<ScoredBox>& dets, double iou_thresh);

// Greedy detection-to-ground-truth matching in descending score order. Each
// entry is (det index, gt index) with gt index -1 for unmatched; entries
// appear in processing order. A gt is used at most once; matches require
// equal class and IoU >= iou_thresh (best IoU wins, lowest gt index on ties).
std::vector<std::pair<int, int>> greedy_match(const std::vector<ScoredBox>& dets,
                                              const std::vector<GtBox>& gts, double iou_thresh);

// Shared ordering for score ties so matching and metrics stay deterministic.
bool det_order_less(const ScoredBox& a, const ScoredBox& b);

} // namespace irdet
