#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "irdet/geometry.hpp"
#include "irdet/image.hpp"
#include "irdet/rng.hpp"

namespace irdet {

constexpr int kFrameHeight = 64;
constexpr int kFrameWidth = 80;

// Benchmark taxonomy, ids fixed.
enum EventClass : int {
    kElectronStreak = 1,
    kInboardStrikePoint = 2,
    kOutboardStrikePoint = 3,
    kReflection = 4,
    kRadiatedFlux = 5,
    kUfo = 6,
    kHotSpot = 7,
};

// One thermal event at one instant. The intensity field is an anisotropic
// Gaussian, optionally bent (curvature, for arc classes) or rotated (angle,
// for moving debris). Center coordinates are continuous, x along width.
struct EventInstance {
    int class_id = kHotSpot;
    int label_class = kHotSpot;
    double cx = 0, cy = 0;
    double amp = 0; // peak intensity above background, counts
    double sigma_along = 1, sigma_across = 1;
    double angle = 0;     // radians
    double curvature = 0; // row bend per squared column offset
};

struct ClassPrior {
    double row_mean = 32, row_std = 8;
    double col_lo = 8, col_hi = 72;
};

// Fixed bright structure present in every frame of a campaign, never
// annotated.
struct ExtraComponent {
    double cx = 0, cy = 0;
    double amp = 0;
    double sigma_along = 8, sigma_across = 1.6;
    double curvature = 0;
};

struct CampaignProfile {
    double background_gain = 1.0;
    double background_offset = 0.0; // counts
    uint64_t wall_pattern_seed = 0;
    double warp_dx = 0.0, warp_dy = 0.0; // pattern shift, magnitude <= 2 px
    double noise_sigma = 300.0;          // counts
    std::optional<ExtraComponent> extra_component;
    std::array<ClassPrior, kNumClasses> event_location_prior{};
};

CampaignProfile default_profile_a();
// Built-in inter-campaign shift: gain/offset change, sub-pixel warp, one
// added bright structure, shifted placement priors.
CampaignProfile default_profile_b();

enum class Campaign { A, B };

struct Film {
    int film_id = 0;
    Campaign campaign = Campaign::A;
    std::vector<Image16> frames;
    std::vector<std::vector<GtBox>> annotations; // per frame
};

struct DatasetSpec {
    int films_per_campaign = 6;
    int frames_per_film = 200;
    // Skewed like the real campaign statistics: strike points and hot spots
    // dominant, debris rare.
    std::array<double, kNumClasses> class_frequency_weights = {46, 114, 140, 29, 25, 6, 247};
    uint64_t seed = 0;
    int events_per_film_lo = 6, events_per_film_hi = 10;
    int lifetime_lo = 30, lifetime_hi = 120; // frames, class-independent
    // Optional annotation-session drift: a fraction of one class relabelled
    // as another (rendering unchanged). Off by default.
    double relabel_fraction = 0.0;
    int relabel_from = kRadiatedFlux;
    int relabel_to = kHotSpot;
};

// Analytic tight bounding box of the region where the event field exceeds
// 10% of its peak, before clipping to the frame.
BBox event_box(const EventInstance& ev);

// Campaign background without noise: warped wall pattern under gain/offset
// plus the extra component.
ImageD render_background(const CampaignProfile& campaign);

// Background + events + per-pixel Gaussian noise (row-major draw order),
// clamped to 16 bits. Annotation boxes are clipped to the frame; an event
// whose thresholded region is empty or degenerate is an error.
std::pair<Image16, std::vector<GtBox>> render_frame(const std::vector<EventInstance>& scene,
                                                    const CampaignProfile& campaign, Rng& rng);

std::vector<Film> generate_dataset(const DatasetSpec& spec, const CampaignProfile& profile_a,
                                   const CampaignProfile& profile_b);

// Film-level partition; every campaign contributes at least one film to each
// side.
std::pair<std::vector<Film>, std::vector<Film>> split_films(const std::vector<Film>& dataset,
                                                            double train_fraction, uint64_t seed);

struct Sample {
    int film_id = 0;
    int frame_index = 0;
    Campaign campaign = Campaign::A;
    Image16 image;
    std::vector<GtBox> boxes; // empty for unlabelled samples
};

// Labelled subset of round(percent/100 x total) images spread equally across
// films (remainder by ascending film id); the complement is returned with
// labels stripped.
std::pair<std::vector<Sample>, std::vector<Sample>> subsample_labels(
    const std::vector<Film>& train_films, double percent, uint64_t seed);

} // namespace irdet
