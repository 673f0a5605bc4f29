#pragma once

#include <optional>
#include <string>
#include <vector>

#include "irdet/geometry.hpp"
#include "irdet/image.hpp"
#include "irdet/rng.hpp"

namespace irdet {

// Row-vector convention: (x', y') = (a x + b y + tx, c x + d y + ty).
struct Affine {
    double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;

    static Affine identity() { return {}; }
    static Affine translation(double dx, double dy) { return {1, 0, 0, 1, dx, dy}; }

    std::pair<double, double> apply(double x, double y) const {
        return {a * x + b * y + tx, c * x + d * y + ty};
    }
    // this first, then next
    Affine then(const Affine& next) const {
        return {next.a * a + next.b * c,
                next.a * b + next.b * d,
                next.c * a + next.d * c,
                next.c * b + next.d * d,
                next.a * tx + next.b * ty + next.tx,
                next.c * tx + next.d * ty + next.ty};
    }
    Affine inverse() const;
};

// axis-aligned hull of the box corners under the map, no clipping
BBox transform_box(const Affine& t, const BBox& box);

// hull then clip to [0,w]x[0,h]; nullopt when the clipped area is < 1 px^2
std::optional<BBox> transform_clip_box(const Affine& t, const BBox& box, double w, double h);

struct AugStep {
    std::string name;
    std::vector<double> params;

    bool operator==(const AugStep& o) const = default;
};

struct AugmentedSample {
    Image16 image;
    std::vector<GtBox> boxes;
    std::vector<AugStep> applied;
};

// Composed box-space affine of every geometric step in an `applied` record,
// for an image of size w x h.
Affine geometric_transform(const std::vector<AugStep>& applied, double w, double h);

// zoom about the image center in [0.8,1.2] plus horizontal flip with p=0.5
AugmentedSample weak_augment(const Image16& image, const std::vector<GtBox>& boxes, Rng& rng);

// weak, then one of {contrast, brighten, sharpen, identity}; photometric
// steps never move boxes
AugmentedSample supervised_augment(const Image16& image, const std::vector<GtBox>& boxes, Rng& rng);

// supervised, then translation up to 10% per axis, shear up to 10 degrees,
// and 1-3 cutout rectangles (each at most 5% of the area) filled with the
// 1st-percentile intensity
AugmentedSample strong_augment(const Image16& image, const std::vector<GtBox>& boxes, Rng& rng);

// transforms that would break the physical meaning of the pixel values;
// configs naming one of these are rejected
const std::vector<std::string>& excluded_augmentations();

// throws ConfigError on an excluded or unknown augmentation name
void validate_augmentation_names(const std::vector<std::string>& names);

// re-applies a recorded augmentation bit-exactly
AugmentedSample replay(const Image16& image, const std::vector<GtBox>& boxes,
                       const std::vector<AugStep>& applied);

} // namespace irdet
