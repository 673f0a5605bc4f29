#include "irdet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "irdet/errors.hpp"

namespace irdet {

Affine Affine::inverse() const {
    const double det = a * d - b * c;
    if (det == 0.0) throw ValidationError("Affine::inverse: singular transform");
    const double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;
    return {ia, ib, ic, id, -(ia * tx + ib * ty), -(ic * tx + id * ty)};
}

BBox transform_box(const Affine& t, const BBox& box) {
    const double xs[2] = {box.x, box.x + box.w};
    const double ys[2] = {box.y, box.y + box.h};
    double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
    bool first = true;
    for (double x : xs)
        for (double y : ys) {
            const auto [px, py] = t.apply(x, y);
            if (first) {
                lo_x = hi_x = px;
                lo_y = hi_y = py;
                first = false;
            } else {
                lo_x = std::min(lo_x, px);
                hi_x = std::max(hi_x, px);
                lo_y = std::min(lo_y, py);
                hi_y = std::max(hi_y, py);
            }
        }
    return {lo_x, lo_y, hi_x - lo_x, hi_y - lo_y};
}

std::optional<BBox> transform_clip_box(const Affine& t, const BBox& box, double w, double h) {
    const BBox m = transform_box(t, box);
    const double x0 = std::max(m.x, 0.0), y0 = std::max(m.y, 0.0);
    const double x1 = std::min(m.right(), w), y1 = std::min(m.bottom(), h);
    if (x1 <= x0 || y1 <= y0) return std::nullopt;
    const BBox clipped{x0, y0, x1 - x0, y1 - y0};
    if (clipped.area() < 1.0) return std::nullopt;
    return clipped;
}

namespace {

constexpr double kDegToRad = 0.017453292519943295;

Affine scale_about_center(double s, double w, double h) {
    return {s, 0, 0, s, 0.5 * w * (1.0 - s), 0.5 * h * (1.0 - s)};
}

Affine hflip_about_width(double w) { return {-1, 0, 0, 1, w, 0}; }

Affine shear_about_center(double deg, double h) {
    const double t = std::tan(deg * kDegToRad);
    return {1, t, 0, 1, -t * 0.5 * h, 0};
}

Affine step_affine(const AugStep& s, double w, double h) {
    if (s.name == "scale") return scale_about_center(s.params.at(0), w, h);
    if (s.name == "hflip") return s.params.at(0) != 0.0 ? hflip_about_width(w) : Affine::identity();
    if (s.name == "translate") return Affine::translation(s.params.at(0), s.params.at(1));
    if (s.name == "shear") return shear_about_center(s.params.at(0), h);
    return Affine::identity();
}

bool is_geometric(const std::string& name) {
    return name == "scale" || name == "hflip" || name == "translate" || name == "shear";
}

Image16 resample(const Image16& src, const Affine& fwd, double fill) {
    const Affine inv = fwd.inverse();
    Image16 out(src.rows(), src.cols());
    for (Eigen::Index r = 0; r < src.rows(); ++r)
        for (Eigen::Index c = 0; c < src.cols(); ++c) {
            const auto [x, y] =
                inv.apply(static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5);
            out(r, c) = clamp_u16(bilinear_sample(src, x, y, fill));
        }
    return out;
}

// exact column reversal so a double flip is the identity
Image16 flip_columns(const Image16& src) {
    Image16 out(src.rows(), src.cols());
    for (Eigen::Index r = 0; r < src.rows(); ++r)
        for (Eigen::Index c = 0; c < src.cols(); ++c) out(r, c) = src(r, src.cols() - 1 - c);
    return out;
}

// maps boxes through t, clips, drops degenerate ones with a record entry
void apply_geometry_to_boxes(AugmentedSample& s, const Affine& t) {
    const double w = static_cast<double>(s.image.cols());
    const double h = static_cast<double>(s.image.rows());
    std::vector<GtBox> kept;
    kept.reserve(s.boxes.size());
    for (std::size_t i = 0; i < s.boxes.size(); ++i) {
        auto mapped = transform_clip_box(t, s.boxes[i].box, w, h);
        if (mapped) {
            kept.push_back({*mapped, s.boxes[i].class_id});
        } else {
            s.applied.push_back({"drop_box", {static_cast<double>(i)}});
        }
    }
    s.boxes = std::move(kept);
}

Image16 box_blur3(const Image16& src) {
    // separable 3x3 binomial kernel with replicated borders
    static const double k[3] = {0.25, 0.5, 0.25};
    const Eigen::Index h = src.rows(), w = src.cols();
    ImageD tmp(h, w), out(h, w);
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c < w; ++c) {
            double v = 0;
            for (int d = -1; d <= 1; ++d) {
                const Eigen::Index cc = std::clamp<Eigen::Index>(c + d, 0, w - 1);
                v += k[d + 1] * static_cast<double>(src(r, cc));
            }
            tmp(r, c) = v;
        }
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c < w; ++c) {
            double v = 0;
            for (int d = -1; d <= 1; ++d) {
                const Eigen::Index rr = std::clamp<Eigen::Index>(r + d, 0, h - 1);
                v += k[d + 1] * tmp(rr, c);
            }
            out(r, c) = v;
        }
    Image16 res(h, w);
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c < w; ++c) res(r, c) = clamp_u16(out(r, c));
    return res;
}

void apply_photometric(AugmentedSample& s, const AugStep& step) {
    Image16& img = s.image;
    if (step.name == "identity") return;
    if (step.name == "contrast") {
        const double f = step.params.at(0);
        const double mean = to_double(img).mean();
        for (Eigen::Index i = 0; i < img.size(); ++i)
            img.data()[i] = clamp_u16(mean + f * (static_cast<double>(img.data()[i]) - mean));
        return;
    }
    if (step.name == "brighten") {
        const double k = step.params.at(0);
        for (Eigen::Index i = 0; i < img.size(); ++i)
            img.data()[i] = clamp_u16(static_cast<double>(img.data()[i]) + k);
        return;
    }
    if (step.name == "sharpen") {
        const double amount = step.params.at(0);
        const Image16 blurred = box_blur3(img);
        for (Eigen::Index i = 0; i < img.size(); ++i) {
            const double v = static_cast<double>(img.data()[i]);
            const double b = static_cast<double>(blurred.data()[i]);
            img.data()[i] = clamp_u16(v + amount * (v - b));
        }
        return;
    }
    throw ConfigError("unknown photometric step: " + step.name);
}

void apply_cutout(AugmentedSample& s, const AugStep& step) {
    const auto x0 = static_cast<Eigen::Index>(step.params.at(0));
    const auto y0 = static_cast<Eigen::Index>(step.params.at(1));
    const auto cw = static_cast<Eigen::Index>(step.params.at(2));
    const auto ch = static_cast<Eigen::Index>(step.params.at(3));
    const auto fill = static_cast<uint16_t>(quantile(s.image, 0.01));
    const Eigen::Index x1 = std::min(x0 + cw, s.image.cols());
    const Eigen::Index y1 = std::min(y0 + ch, s.image.rows());
    for (Eigen::Index r = std::max<Eigen::Index>(y0, 0); r < y1; ++r)
        for (Eigen::Index c = std::max<Eigen::Index>(x0, 0); c < x1; ++c) s.image(r, c) = fill;
}

// Records the step, then applies it; box-drop records land right after the
// step that caused them. A shear immediately following a translate is applied
// as one composed resample by run_affine_pair instead.
void run_step(AugmentedSample& s, const AugStep& step) {
    s.applied.push_back(step);
    const double w = static_cast<double>(s.image.cols());
    const double h = static_cast<double>(s.image.rows());
    if (step.name == "scale") {
        const double f = step.params.at(0);
        if (f != 1.0) s.image = resample(s.image, scale_about_center(f, w, h), quantile(s.image, 0.01));
        apply_geometry_to_boxes(s, scale_about_center(f, w, h));
    } else if (step.name == "hflip") {
        if (step.params.at(0) != 0.0) {
            s.image = flip_columns(s.image);
            apply_geometry_to_boxes(s, hflip_about_width(w));
        }
    } else if (step.name == "translate" || step.name == "shear") {
        const Affine t = step_affine(step, w, h);
        const bool moves = t.b != 0 || t.tx != 0 || t.ty != 0;
        if (moves) s.image = resample(s.image, t, quantile(s.image, 0.01));
        apply_geometry_to_boxes(s, t);
    } else if (step.name == "cutout") {
        apply_cutout(s, step);
    } else {
        apply_photometric(s, step);
    }
}

void run_affine_pair(AugmentedSample& s, const AugStep& a, const AugStep& b) {
    s.applied.push_back(a);
    s.applied.push_back(b);
    const double w = static_cast<double>(s.image.cols());
    const double h = static_cast<double>(s.image.rows());
    const Affine t = step_affine(a, w, h).then(step_affine(b, w, h));
    const bool moves = t.a != 1 || t.b != 0 || t.c != 0 || t.d != 1 || t.tx != 0 || t.ty != 0;
    if (moves) s.image = resample(s.image, t, quantile(s.image, 0.01));
    apply_geometry_to_boxes(s, t);
}

AugmentedSample start(const Image16& image, const std::vector<GtBox>& boxes) {
    AugmentedSample s;
    s.image = image;
    s.boxes = boxes;
    return s;
}

} // namespace

Affine geometric_transform(const std::vector<AugStep>& applied, double w, double h) {
    Affine t = Affine::identity();
    for (const auto& s : applied)
        if (is_geometric(s.name)) t = t.then(step_affine(s, w, h));
    return t;
}

AugmentedSample weak_augment(const Image16& image, const std::vector<GtBox>& boxes, Rng& rng) {
    AugmentedSample s = start(image, boxes);
    const double f = rng.uniform(0.8, 1.2);
    const double flip = rng.bernoulli(0.5) ? 1.0 : 0.0;
    run_step(s, {"scale", {f}});
    run_step(s, {"hflip", {flip}});
    return s;
}

AugmentedSample supervised_augment(const Image16& image, const std::vector<GtBox>& boxes,
                                   Rng& rng) {
    AugmentedSample s = weak_augment(image, boxes, rng);
    const auto branch = rng.uniform_int(4);
    AugStep step;
    switch (branch) {
    case 0:
        step = {"contrast", {rng.uniform(0.7, 1.3)}};
        break;
    case 1:
        step = {"brighten", {rng.uniform(-0.05, 0.05) * kIntensityMax}};
        break;
    case 2:
        step = {"sharpen", {rng.uniform(0.0, 0.5)}};
        break;
    default:
        step = {"identity", {}};
        break;
    }
    run_step(s, step);
    return s;
}

AugmentedSample strong_augment(const Image16& image, const std::vector<GtBox>& boxes, Rng& rng) {
    AugmentedSample s = supervised_augment(image, boxes, rng);
    const double w = static_cast<double>(s.image.cols());
    const double h = static_cast<double>(s.image.rows());
    const double dx = rng.uniform(-0.1, 0.1) * w;
    const double dy = rng.uniform(-0.1, 0.1) * h;
    const double sh = rng.uniform(-10.0, 10.0);
    run_affine_pair(s, {"translate", {dx, dy}}, {"shear", {sh}});

    const auto n_cut = 1 + rng.uniform_int(3);
    const double max_area = 0.05 * w * h;
    for (uint64_t i = 0; i < n_cut; ++i) {
        const uint64_t cw = 3 + rng.uniform_int(14); // [3, 16]
        const uint64_t cap = static_cast<uint64_t>(max_area / static_cast<double>(cw));
        const uint64_t max_h = std::clamp<uint64_t>(cap, 3, 16);
        const uint64_t ch = 3 + rng.uniform_int(max_h - 2); // [3, max_h]
        const uint64_t x0 = rng.uniform_int(static_cast<uint64_t>(w) - cw + 1);
        const uint64_t y0 = rng.uniform_int(static_cast<uint64_t>(h) - ch + 1);
        run_step(s, {"cutout",
                     {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(cw),
                      static_cast<double>(ch)}});
    }
    return s;
}

const std::vector<std::string>& excluded_augmentations() {
    static const std::vector<std::string> names = {"equalize", "solarize", "color-channel-mix",
                                                   "posterize", "invert"};
    return names;
}

void validate_augmentation_names(const std::vector<std::string>& names) {
    static const std::vector<std::string> known = {"scale",    "hflip",   "contrast",
                                                   "brighten", "sharpen", "identity",
                                                   "translate", "shear",  "cutout"};
    for (const auto& n : names) {
        for (const auto& ex : excluded_augmentations())
            if (n == ex)
                throw ConfigError("augmentation '" + n +
                                  "' is excluded: it does not preserve the physical meaning of "
                                  "the pixel intensities");
        if (std::find(known.begin(), known.end(), n) == known.end())
            throw ConfigError("unknown augmentation '" + n + "'");
    }
}

AugmentedSample replay(const Image16& image, const std::vector<GtBox>& boxes,
                       const std::vector<AugStep>& applied) {
    AugmentedSample s = start(image, boxes);
    for (std::size_t i = 0; i < applied.size(); ++i) {
        const AugStep& step = applied[i];
        if (step.name == "drop_box") continue;
        if (step.name == "translate" && i + 1 < applied.size() && applied[i + 1].name == "shear") {
            run_affine_pair(s, step, applied[i + 1]);
            ++i;
            continue;
        }
        run_step(s, step);
    }
    return s;
}

} // namespace irdet
