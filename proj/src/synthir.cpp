#include "irdet/synthir.hpp"

#include <algorithm>
#include <cmath>

#include "irdet/errors.hpp"

namespace irdet {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Smooth analytic wall pattern, fixed per campaign: low-frequency cosine
// modes, a few broad bumps, a mild gradient.
struct WallPattern {
    double base = 0, grad_x = 0, grad_y = 0;
    struct Mode {
        double amp, fx, fy, phase;
    };
    std::array<Mode, 4> modes{};
    struct Bump {
        double amp, cx, cy, sigma;
    };
    std::array<Bump, 3> bumps{};

    double eval(double x, double y) const {
        double v = base + grad_x * x + grad_y * y;
        for (const auto& m : modes)
            v += m.amp * std::cos(kTwoPi * (m.fx * x / kFrameWidth + m.fy * y / kFrameHeight) +
                                  m.phase);
        for (const auto& b : bumps) {
            const double dx = x - b.cx, dy = y - b.cy;
            v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        }
        return v;
    }
};

WallPattern make_wall(uint64_t seed) {
    Rng rng(derive_seed(seed, 0x3a11));
    WallPattern w;
    w.base = 11000.0 + rng.uniform() * 1500.0;
    w.grad_x = rng.uniform(-8.0, 8.0);
    w.grad_y = rng.uniform(-12.0, 12.0);
    for (auto& m : w.modes) {
        m.amp = rng.uniform(350.0, 900.0);
        m.fx = rng.uniform(0.4, 2.4);
        m.fy = rng.uniform(0.4, 2.4);
        m.phase = rng.uniform() * kTwoPi;
    }
    for (auto& b : w.bumps) {
        b.amp = rng.uniform(900.0, 2200.0);
        b.cx = rng.uniform(6.0, kFrameWidth - 6.0);
        b.cy = rng.uniform(6.0, kFrameHeight - 6.0);
        b.sigma = rng.uniform(5.0, 13.0);
    }
    return w;
}

double event_field(const EventInstance& ev, double x, double y) {
    double u = x - ev.cx;
    double w = y - ev.cy;
    if (ev.curvature != 0.0) {
        w -= ev.curvature * u * u;
    } else if (ev.angle != 0.0) {
        const double ca = std::cos(ev.angle), sa = std::sin(ev.angle);
        const double ru = ca * u + sa * w;
        const double rw = -sa * u + ca * w;
        u = ru;
        w = rw;
    }
    const double qa = u / ev.sigma_along, qc = w / ev.sigma_across;
    return ev.amp * std::exp(-0.5 * (qa * qa + qc * qc));
}

// Tight box of { field >= level * peak }. For the bent (arc) form the lower
// edge on the bend side extends to max_t [k t^2 + sc*sqrt(s^2 - t^2/sa^2)].
BBox level_box(const EventInstance& ev, double level) {
    const double s = std::sqrt(-2.0 * std::log(level));
    const double sa = ev.sigma_along, sc = ev.sigma_across;
    if (ev.curvature != 0.0) {
        const double k = std::abs(ev.curvature);
        const double hx = sa * s;
        double bulge = sc * s;
        if (2.0 * k * sa * sa * s >= sc) bulge = k * sa * sa * s * s + sc * sc / (4.0 * k * sa * sa);
        const double up = ev.curvature > 0 ? sc * s : bulge;
        const double down = ev.curvature > 0 ? bulge : sc * s;
        return {ev.cx - hx, ev.cy - up, 2.0 * hx, up + down};
    }
    const double ca = std::cos(ev.angle), sina = std::sin(ev.angle);
    const double hx = s * std::sqrt(sa * sa * ca * ca + sc * sc * sina * sina);
    const double hy = s * std::sqrt(sa * sa * sina * sina + sc * sc * ca * ca);
    return {ev.cx - hx, ev.cy - hy, 2.0 * hx, 2.0 * hy};
}

// support window beyond which the field is below 1e-4 of peak
constexpr double kSupportLevel = 1e-4;

void add_event(ImageD& acc, const EventInstance& ev, double gain) {
    const BBox win = level_box(ev, kSupportLevel);
    const int c0 = std::max(0, static_cast<int>(std::floor(win.x - 0.5)));
    const int c1 = std::min(kFrameWidth - 1, static_cast<int>(std::ceil(win.right() + 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::floor(win.y - 0.5)));
    const int r1 = std::min(kFrameHeight - 1, static_cast<int>(std::ceil(win.bottom() + 0.5)));
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
            acc(r, c) += gain * event_field(ev, c + 0.5, r + 0.5);
}

} // namespace

BBox event_box(const EventInstance& ev) { return level_box(ev, 0.1); }

CampaignProfile default_profile_a() {
    CampaignProfile p;
    p.background_gain = 1.0;
    p.background_offset = 0.0;
    p.wall_pattern_seed = 0xa17e57;
    p.warp_dx = 0.0;
    p.warp_dy = 0.0;
    p.noise_sigma = 300.0;
    p.event_location_prior = {{
        {4.5, 1.0, 12.0, 68.0},  // electron streaks, top rim
        {45.0, 2.5, 20.0, 60.0}, // inboard strike band
        {55.0, 2.0, 20.0, 60.0}, // outboard strike band
        {22.0, 6.0, 10.0, 70.0}, // reflections
        {14.0, 5.0, 12.0, 68.0}, // radiated flux
        {32.0, 12.0, 14.0, 66.0},
        {34.0, 14.0, 8.0, 72.0}, // hot spots, anywhere
    }};
    return p;
}

CampaignProfile default_profile_b() {
    CampaignProfile p = default_profile_a();
    // the shift lives mostly in the global operating point and layout, so
    // campaign B stays about as learnable as A while transfer from A-only
    // statistics breaks down
    p.background_gain = 1.12;
    p.background_offset = 8000.0;
    p.warp_dx = 1.6;
    p.warp_dy = -1.2;
    p.noise_sigma = 315.0;
    ExtraComponent x;
    x.cx = 22.0;
    x.cy = 50.0;
    x.amp = 6500.0;
    x.sigma_along = 9.0;
    x.sigma_across = 1.8;
    x.curvature = 0.012;
    p.extra_component = x;
    p.event_location_prior = {{
        {6.5, 1.0, 14.0, 70.0},
        {41.0, 2.5, 18.0, 58.0},
        {51.0, 2.0, 22.0, 62.0},
        {30.0, 6.0, 12.0, 72.0},
        {20.0, 5.0, 14.0, 70.0},
        {32.0, 12.0, 14.0, 66.0},
        {30.0, 14.0, 8.0, 72.0},
    }};
    return p;
}

ImageD render_background(const CampaignProfile& campaign) {
    const WallPattern wall = make_wall(campaign.wall_pattern_seed);
    ImageD bg(kFrameHeight, kFrameWidth);
    for (int r = 0; r < kFrameHeight; ++r)
        for (int c = 0; c < kFrameWidth; ++c)
            bg(r, c) = campaign.background_gain *
                           wall.eval(c + 0.5 - campaign.warp_dx, r + 0.5 - campaign.warp_dy) +
                       campaign.background_offset;
    if (campaign.extra_component) {
        const auto& x = *campaign.extra_component;
        EventInstance ev;
        ev.cx = x.cx;
        ev.cy = x.cy;
        ev.amp = x.amp;
        ev.sigma_along = x.sigma_along;
        ev.sigma_across = x.sigma_across;
        ev.curvature = x.curvature;
        add_event(bg, ev, 1.0);
    }
    return bg;
}

std::pair<Image16, std::vector<GtBox>> render_frame(const std::vector<EventInstance>& scene,
                                                    const CampaignProfile& campaign, Rng& rng) {
    if (campaign.background_gain <= 0.0)
        throw ValidationError("render_frame: background_gain must be positive");
    ImageD acc = render_background(campaign);
    std::vector<GtBox> ann;
    ann.reserve(scene.size());
    for (const auto& ev : scene) {
        if (!(ev.amp > 0.0)) throw ValidationError("render_frame: event peak must be positive");
        add_event(acc, ev, campaign.background_gain);
        const BBox b = event_box(ev);
        const double x0 = std::max(b.x, 0.0), y0 = std::max(b.y, 0.0);
        const double x1 = std::min(b.right(), static_cast<double>(kFrameWidth));
        const double y1 = std::min(b.bottom(), static_cast<double>(kFrameHeight));
        if (x1 - x0 < 1.0 || y1 - y0 < 1.0)
            throw ValidationError("render_frame: event box degenerate after thresholding");
        ann.push_back({{x0, y0, x1 - x0, y1 - y0}, ev.label_class});
    }
    if (campaign.noise_sigma > 0.0)
        for (int r = 0; r < kFrameHeight; ++r)
            for (int c = 0; c < kFrameWidth; ++c) acc(r, c) += rng.normal(0.0, campaign.noise_sigma);
    Image16 out(kFrameHeight, kFrameWidth);
    for (int r = 0; r < kFrameHeight; ++r)
        for (int c = 0; c < kFrameWidth; ++c) out(r, c) = clamp_u16(acc(r, c));
    return {std::move(out), std::move(ann)};
}

namespace {

// keeps the annotation box at least 1 px inside the frame when it fits
void shift_into_frame(EventInstance& ev) {
    const BBox b = event_box(ev);
    if (b.w >= kFrameWidth - 2.0) {
        ev.cx += kFrameWidth / 2.0 - (b.x + b.w / 2.0);
    } else if (b.x < 1.0) {
        ev.cx += 1.0 - b.x;
    } else if (b.right() > kFrameWidth - 1.0) {
        ev.cx -= b.right() - (kFrameWidth - 1.0);
    }
    const BBox by = event_box(ev);
    if (by.h >= kFrameHeight - 2.0) {
        ev.cy += kFrameHeight / 2.0 - (by.y + by.h / 2.0);
    } else if (by.y < 1.0) {
        ev.cy += 1.0 - by.y;
    } else if (by.bottom() > kFrameHeight - 1.0) {
        ev.cy -= by.bottom() - (kFrameHeight - 1.0);
    }
}

struct FilmEvent {
    EventInstance proto;
    int birth = 0, life = 1;
    std::vector<std::pair<double, double>> track; // per alive frame, moving classes only
};

FilmEvent draw_film_event(const DatasetSpec& spec, const CampaignProfile& prof, Rng& rng,
                          const std::vector<double>& weights, int frames) {
    FilmEvent fe;
    const int cls = static_cast<int>(rng.weighted_index(weights)) + 1;
    fe.birth = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(frames)));
    const int span = spec.lifetime_hi - spec.lifetime_lo + 1;
    int life = spec.lifetime_lo + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(span)));
    fe.life = std::min(life, frames - fe.birth);

    EventInstance& ev = fe.proto;
    ev.class_id = cls;
    ev.label_class = cls;
    const ClassPrior& prior = prof.event_location_prior[cls - 1];
    ev.cy = prior.row_mean + prior.row_std * rng.normal();
    ev.cx = rng.uniform(prior.col_lo, prior.col_hi);

    const double u = rng.uniform();
    double speed = 0.0, dir = 0.0;
    switch (cls) {
    case kElectronStreak:
        ev.sigma_along = 5.0 + 5.0 * u;
        ev.sigma_across = rng.uniform(0.7, 1.2);
        ev.curvature = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.002, 0.006);
        ev.amp = rng.uniform(4000.0, 9000.0);
        break;
    case kInboardStrikePoint:
        ev.sigma_along = 7.0 + 7.0 * u;
        ev.sigma_across = rng.uniform(1.2, 2.2);
        ev.curvature = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.004, 0.012);
        ev.amp = rng.uniform(9000.0, 22000.0);
        break;
    case kOutboardStrikePoint:
        ev.sigma_along = 8.0 + 8.0 * u;
        ev.sigma_across = rng.uniform(1.4, 2.6);
        ev.curvature = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.003, 0.010);
        ev.amp = rng.uniform(10000.0, 26000.0);
        break;
    case kReflection:
        ev.sigma_along = 3.0 + 2.5 * u;
        ev.sigma_across = ev.sigma_along * rng.uniform(0.8, 1.25);
        ev.amp = rng.uniform(2800.0, 5200.0);
        break;
    case kRadiatedFlux:
        ev.sigma_along = 2.5 + 1.5 * u;
        ev.sigma_across = ev.sigma_along * rng.uniform(1.6, 2.4);
        ev.amp = rng.uniform(3000.0, 6000.0);
        break;
    case kUfo: {
        const double base = 0.8 + 0.6 * u;
        speed = rng.uniform(1.2, 2.2);
        dir = rng.uniform() * kTwoPi;
        ev.sigma_along = base * (1.0 + 0.8 * speed);
        ev.sigma_across = base;
        ev.angle = dir;
        ev.amp = rng.uniform(9000.0, 20000.0);
        break;
    }
    default:
        ev.sigma_along = 0.9 + 0.7 * u;
        ev.sigma_across = ev.sigma_along * rng.uniform(0.85, 1.18);
        ev.amp = rng.uniform(8000.0, 28000.0);
        break;
    }
    if (spec.relabel_fraction > 0.0 && cls == spec.relabel_from &&
        rng.bernoulli(spec.relabel_fraction))
        ev.label_class = spec.relabel_to;

    shift_into_frame(ev);

    if (cls == kUfo) {
        const BBox b = event_box(ev);
        const double hx = b.w / 2.0, hy = b.h / 2.0;
        const double xlo = hx + 1.0, xhi = kFrameWidth - 1.0 - hx;
        const double ylo = hy + 1.0, yhi = kFrameHeight - 1.0 - hy;
        double x = std::clamp(ev.cx, xlo, xhi), y = std::clamp(ev.cy, ylo, yhi);
        double vx = speed * std::cos(dir), vy = speed * std::sin(dir);
        fe.track.reserve(static_cast<std::size_t>(fe.life));
        for (int t = 0; t < fe.life; ++t) {
            fe.track.emplace_back(x, y);
            x += vx;
            y += vy;
            while (x < xlo || x > xhi) {
                if (x < xlo) {
                    x = 2.0 * xlo - x;
                    vx = -vx;
                }
                if (x > xhi) {
                    x = 2.0 * xhi - x;
                    vx = -vx;
                }
            }
            while (y < ylo || y > yhi) {
                if (y < ylo) {
                    y = 2.0 * ylo - y;
                    vy = -vy;
                }
                if (y > yhi) {
                    y = 2.0 * yhi - y;
                    vy = -vy;
                }
            }
        }
    }
    return fe;
}

} // namespace

std::vector<Film> generate_dataset(const DatasetSpec& spec, const CampaignProfile& profile_a,
                                   const CampaignProfile& profile_b) {
    if (spec.films_per_campaign < 1 || spec.frames_per_film < 1)
        throw ValidationError("generate_dataset: need at least one film and one frame");
    if (spec.events_per_film_lo < 0 || spec.events_per_film_hi < spec.events_per_film_lo ||
        spec.lifetime_lo < 1 || spec.lifetime_hi < spec.lifetime_lo)
        throw ValidationError("generate_dataset: bad event count or lifetime range");
    const std::vector<double> weights(spec.class_frequency_weights.begin(),
                                      spec.class_frequency_weights.end());
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ValidationError("generate_dataset: negative class weight");
        wsum += w;
    }
    if (wsum <= 0.0) throw ValidationError("generate_dataset: class weights sum to zero");

    std::vector<Film> films;
    films.reserve(static_cast<std::size_t>(2 * spec.films_per_campaign));
    for (int film_id = 0; film_id < 2 * spec.films_per_campaign; ++film_id) {
        const bool is_a = film_id < spec.films_per_campaign;
        const CampaignProfile& prof = is_a ? profile_a : profile_b;
        Film film;
        film.film_id = film_id;
        film.campaign = is_a ? Campaign::A : Campaign::B;

        Rng rs(derive_seed(spec.seed, static_cast<uint64_t>(film_id), 0));
        const int span = spec.events_per_film_hi - spec.events_per_film_lo + 1;
        const int n_events =
            spec.events_per_film_lo + static_cast<int>(rs.uniform_int(static_cast<uint64_t>(span)));
        std::vector<FilmEvent> events;
        events.reserve(static_cast<std::size_t>(n_events));
        for (int i = 0; i < n_events; ++i)
            events.push_back(draw_film_event(spec, prof, rs, weights, spec.frames_per_film));

        film.frames.reserve(static_cast<std::size_t>(spec.frames_per_film));
        film.annotations.reserve(static_cast<std::size_t>(spec.frames_per_film));
        for (int t = 0; t < spec.frames_per_film; ++t) {
            std::vector<EventInstance> scene;
            for (const auto& fe : events) {
                if (t < fe.birth || t >= fe.birth + fe.life) continue;
                EventInstance ev = fe.proto;
                if (!fe.track.empty()) {
                    ev.cx = fe.track[static_cast<std::size_t>(t - fe.birth)].first;
                    ev.cy = fe.track[static_cast<std::size_t>(t - fe.birth)].second;
                }
                scene.push_back(ev);
            }
            Rng rn(derive_seed(spec.seed, static_cast<uint64_t>(film_id),
                               1000 + static_cast<uint64_t>(t)));
            auto [frame, ann] = render_frame(scene, prof, rn);
            film.frames.push_back(std::move(frame));
            film.annotations.push_back(std::move(ann));
        }
        films.push_back(std::move(film));
    }
    return films;
}

std::pair<std::vector<Film>, std::vector<Film>> split_films(const std::vector<Film>& dataset,
                                                            double train_fraction, uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("split_films: train_fraction must be in (0,1)");
    std::vector<Film> train, test;
    for (int campaign = 0; campaign < 2; ++campaign) {
        std::vector<int> idx;
        for (std::size_t i = 0; i < dataset.size(); ++i)
            if (static_cast<int>(dataset[i].campaign) == campaign)
                idx.push_back(static_cast<int>(i));
        if (idx.size() < 2)
            throw ValidationError("split_films: campaign needs at least 2 films to split");
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return dataset[a].film_id < dataset[b].film_id; });
        Rng rng(derive_seed(seed, static_cast<uint64_t>(campaign)));
        for (std::size_t i = idx.size() - 1; i > 0; --i)
            std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
        const auto n = static_cast<long>(idx.size());
        long n_train = std::lround(train_fraction * static_cast<double>(n));
        n_train = std::clamp(n_train, 1l, n - 1);
        std::vector<int> tr(idx.begin(), idx.begin() + n_train);
        std::vector<int> te(idx.begin() + n_train, idx.end());
        for (auto* side : {&tr, &te})
            std::sort(side->begin(), side->end(),
                      [&](int a, int b) { return dataset[a].film_id < dataset[b].film_id; });
        for (int i : tr) train.push_back(dataset[static_cast<std::size_t>(i)]);
        for (int i : te) test.push_back(dataset[static_cast<std::size_t>(i)]);
    }
    auto by_id = [](const Film& a, const Film& b) { return a.film_id < b.film_id; };
    std::sort(train.begin(), train.end(), by_id);
    std::sort(test.begin(), test.end(), by_id);
    return {std::move(train), std::move(test)};
}

std::pair<std::vector<Sample>, std::vector<Sample>> subsample_labels(
    const std::vector<Film>& train_films, double percent, uint64_t seed) {
    if (!(percent > 0.0 && percent <= 100.0))
        throw ValidationError("subsample_labels: percent must be in (0,100]");
    if (train_films.empty()) throw ValidationError("subsample_labels: no films");

    std::vector<const Film*> films;
    films.reserve(train_films.size());
    for (const auto& f : train_films) films.push_back(&f);
    std::sort(films.begin(), films.end(),
              [](const Film* a, const Film* b) { return a->film_id < b->film_id; });

    std::size_t total = 0;
    for (const auto* f : films) total += f->frames.size();
    const long n_lab = std::lround(percent / 100.0 * static_cast<double>(total));
    const long n_films = static_cast<long>(films.size());
    const long base = n_lab / n_films;
    const long rem = n_lab % n_films;
    if (base < 1) throw ValidationError("subsample_labels: budget below one image per film");

    std::vector<Sample> labelled, unlabelled;
    for (long i = 0; i < n_films; ++i) {
        const Film& f = *films[static_cast<std::size_t>(i)];
        const long quota = base + (i < rem ? 1 : 0);
        const long frames = static_cast<long>(f.frames.size());
        if (quota > frames)
            throw ValidationError("subsample_labels: film shorter than its label quota");
        std::vector<long> order(static_cast<std::size_t>(frames));
        for (long k = 0; k < frames; ++k) order[static_cast<std::size_t>(k)] = k;
        Rng rng(derive_seed(seed, static_cast<uint64_t>(f.film_id)));
        for (std::size_t k = order.size() - 1; k > 0; --k)
            std::swap(order[k], order[rng.uniform_int(k + 1)]);
        std::vector<bool> is_lab(static_cast<std::size_t>(frames), false);
        for (long k = 0; k < quota; ++k) is_lab[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
        for (long t = 0; t < frames; ++t) {
            Sample s;
            s.film_id = f.film_id;
            s.frame_index = static_cast<int>(t);
            s.campaign = f.campaign;
            s.image = f.frames[static_cast<std::size_t>(t)];
            if (is_lab[static_cast<std::size_t>(t)]) {
                s.boxes = f.annotations[static_cast<std::size_t>(t)];
                labelled.push_back(std::move(s));
            } else {
                unlabelled.push_back(std::move(s));
            }
        }
    }
    return {std::move(labelled), std::move(unlabelled)};
}

} // namespace irdet
