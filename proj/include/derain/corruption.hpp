#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "derain/car_glyph.hpp"
#include "derain/data.hpp"
#include "derain/error.hpp"
#include "derain/image.hpp"
#include "derain/util.hpp"

namespace derain {

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// An adherent drop acting as a small lens: magnifies its neighbourhood about
/// the centre, then blurs.
struct Droplet {
    Point center;
    double radius = 1.0;
    double magnification = 1.0;
    double blur_sigma = 0.0;

    void validate() const {
        if (!(radius > 0.0) || !(magnification > 0.0) || !(blur_sigma >= 0.0)) {
            fail(ErrorKind::InvalidArgument, "droplet needs radius > 0, magnification > 0, blur_sigma >= 0");
        }
    }
    friend bool operator==(const Droplet&, const Droplet&) = default;
};

/// A line-segment swath of smeared water.
struct Streak {
    Point start;
    Point end;
    double width = 1.0;
    double blur_sigma = 0.0;

    void validate() const {
        if (start == end || !(width > 0.0) || !(blur_sigma >= 0.0)) {
            fail(ErrorKind::InvalidArgument, "streak needs start != end, width > 0, blur_sigma >= 0");
        }
    }
    friend bool operator==(const Streak&, const Streak&) = default;
};

struct DropletField {
    std::vector<Droplet> droplets;
    std::vector<Streak> streaks;
    std::uint64_t seed = 0;
    friend bool operator==(const DropletField&, const DropletField&) = default;
};

/// Shape distributions for sampled droplets and streaks. Sizes are fractions
/// of the shorter image side so one parameter set serves any resolution.
struct DropletParams {
    double radius_min = 0.07;
    double radius_max = 0.15;
    double magnification_min = 1.6;
    double magnification_max = 2.6;
    double blur_min = 0.8;
    double blur_max = 1.8;
    /// Streaks per megapixel.
    double streak_density = 500.0;
    double streak_length_min = 0.15;
    double streak_length_max = 0.4;
    double streak_width_min = 0.03;
    double streak_width_max = 0.06;
    double streak_blur_min = 1.0;
    double streak_blur_max = 2.0;

    friend bool operator==(const DropletParams&, const DropletParams&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DropletParams, radius_min, radius_max, magnification_min,
                                                magnification_max, blur_min, blur_max, streak_density,
                                                streak_length_min, streak_length_max, streak_width_min,
                                                streak_width_max, streak_blur_min, streak_blur_max)

struct Dims {
    int width = 64;
    int height = 64;
    friend bool operator==(const Dims&, const Dims&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Dims, width, height)

// ---------------------------------------------------------------------------
// Sampling

[[nodiscard]] inline DropletField sample_droplet_field(Dims dims, double density, std::uint64_t seed,
                                                       const DropletParams& params = {}) {
    if (!(density >= 0.0)) fail(ErrorKind::InvalidArgument, "droplet density must be >= 0");
    if (dims.width <= 0 || dims.height <= 0) fail(ErrorKind::InvalidArgument, "dims must be positive");

    DropletField field;
    field.seed = seed;
    if (density == 0.0) return field;

    Rng rng(seed);
    const double w = dims.width;
    const double h = dims.height;
    const double side = std::min(w, h);
    const double megapixels = w * h / 1e6;

    const auto n_drops = poisson(rng, density * megapixels);
    field.droplets.reserve(n_drops);
    for (std::uint64_t i = 0; i < n_drops; ++i) {
        Droplet d;
        d.center = {uniform(rng, 0.0, w), uniform(rng, 0.0, h)};
        d.radius = std::max(0.5, side * uniform(rng, params.radius_min, params.radius_max));
        d.magnification = uniform(rng, params.magnification_min, params.magnification_max);
        d.blur_sigma = uniform(rng, params.blur_min, params.blur_max);
        field.droplets.push_back(d);
    }

    const auto n_streaks = poisson(rng, params.streak_density * megapixels);
    for (std::uint64_t i = 0; i < n_streaks; ++i) {
        Streak s;
        s.start = {uniform(rng, 0.0, w), uniform(rng, 0.0, h)};
        const double angle = uniform(rng, -0.35, 0.35);  // radians off vertical
        const double length = side * uniform(rng, params.streak_length_min, params.streak_length_max);
        s.end = {std::clamp(s.start.x + length * std::sin(angle), 0.0, w),
                 std::clamp(s.start.y + length * std::cos(angle), 0.0, h)};
        s.width = std::max(1.0, side * uniform(rng, params.streak_width_min, params.streak_width_max));
        s.blur_sigma = uniform(rng, params.streak_blur_min, params.streak_blur_max);
        if (std::hypot(s.end.x - s.start.x, s.end.y - s.start.y) < 1.0) continue;  // clipped to a stub
        field.streaks.push_back(s);
    }
    return field;
}

// ---------------------------------------------------------------------------
// Application

namespace detail {

[[nodiscard]] inline std::vector<double> gaussian_kernel(double sigma) {
    if (sigma <= 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

/// Bilinear sample with clamp-to-edge addressing.
[[nodiscard]] inline double bilinear(const RasterImage& img, int c, double x, double y) {
    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    const double ax = x - fx0;
    const double ay = y - fy0;
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    const double top = (1.0 - ax) * img.clamped(c, y0, x0) + ax * img.clamped(c, y0, x0 + 1);
    const double bottom = (1.0 - ax) * img.clamped(c, y0 + 1, x0) + ax * img.clamped(c, y0 + 1, x0 + 1);
    return (1.0 - ay) * top + ay * bottom;
}

struct Rect {
    int x0, y0, x1, y1;  // inclusive
    [[nodiscard]] bool empty() const noexcept { return x1 < x0 || y1 < y0; }
};

[[nodiscard]] inline Rect clip_rect(double x0, double y0, double x1, double y1, int w, int h) {
    return {std::max(0, static_cast<int>(std::ceil(x0))), std::max(0, static_cast<int>(std::ceil(y0))),
            std::min(w - 1, static_cast<int>(std::floor(x1))), std::min(h - 1, static_cast<int>(std::floor(y1)))};
}

/// Blends a blurred version of `source_fn` into `image` on the pixels of
/// `rect` whose alpha is positive. `source_fn(c, x, y)` gives the pre-blur
/// value at an in-image pixel; blur taps are clamped to the image.
template <typename SourceFn, typename AlphaFn>
void blend_blurred(RasterImage& image, const Rect& rect, double sigma, SourceFn source_fn, AlphaFn alpha_fn) {
    if (rect.empty()) return;
    const int w = image.width();
    const int h = image.height();
    const auto kernel = gaussian_kernel(sigma);
    const int k = static_cast<int>(kernel.size() / 2);

    // Source region that the clamped taps can reach.
    const int sx0 = std::max(0, rect.x0 - k), sx1 = std::min(w - 1, rect.x1 + k);
    const int sy0 = std::max(0, rect.y0 - k), sy1 = std::min(h - 1, rect.y1 + k);
    const int sw = sx1 - sx0 + 1, sh = sy1 - sy0 + 1;
    const int rw = rect.x1 - rect.x0 + 1;

    std::vector<double> src(static_cast<std::size_t>(sw) * sh);
    std::vector<double> horiz(static_cast<std::size_t>(sh) * rw);
    std::vector<std::array<double, 3>> out(static_cast<std::size_t>(rw) * (rect.y1 - rect.y0 + 1));

    for (int c = 0; c < 3; ++c) {
        for (int y = sy0; y <= sy1; ++y) {
            for (int x = sx0; x <= sx1; ++x) src[(y - sy0) * sw + (x - sx0)] = source_fn(c, x, y);
        }
        for (int y = sy0; y <= sy1; ++y) {
            for (int x = rect.x0; x <= rect.x1; ++x) {
                double acc = 0.0;
                for (int t = -k; t <= k; ++t) {
                    const int xx = std::clamp(x + t, 0, w - 1);
                    acc += kernel[t + k] * src[(y - sy0) * sw + (xx - sx0)];
                }
                horiz[(y - sy0) * rw + (x - rect.x0)] = acc;
            }
        }
        for (int y = rect.y0; y <= rect.y1; ++y) {
            for (int x = rect.x0; x <= rect.x1; ++x) {
                double acc = 0.0;
                for (int t = -k; t <= k; ++t) {
                    const int yy = std::clamp(y + t, 0, h - 1);
                    acc += kernel[t + k] * horiz[(yy - sy0) * rw + (x - rect.x0)];
                }
                out[(y - rect.y0) * rw + (x - rect.x0)][c] = acc;
            }
        }
    }

    for (int y = rect.y0; y <= rect.y1; ++y) {
        for (int x = rect.x0; x <= rect.x1; ++x) {
            const double alpha = alpha_fn(x, y);
            if (alpha <= 0.0) continue;
            const auto& blurred = out[(y - rect.y0) * rw + (x - rect.x0)];
            for (int c = 0; c < 3; ++c) {
                const double v = alpha * blurred[c] + (1.0 - alpha) * image.at(c, y, x);
                image.set(c, y, x, std::clamp(v, 0.0, 1.0));
            }
        }
    }
}

[[nodiscard]] inline double segment_distance(const Point& a, const Point& b, double x, double y) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double t = std::clamp(((x - a.x) * dx + (y - a.y) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    return std::hypot(x - (a.x + t * dx), y - (a.y + t * dy));
}

}  // namespace detail

/// Feathered coverage of a droplet at pixel (x, y): 1 well inside the disk,
/// falling linearly to 0 over the last pixel before the rim.
[[nodiscard]] inline double droplet_alpha(const Droplet& d, int x, int y) {
    return std::clamp(d.radius - std::hypot(x - d.center.x, y - d.center.y), 0.0, 1.0);
}

[[nodiscard]] inline double streak_alpha(const Streak& s, int x, int y) {
    return std::clamp(0.5 * s.width - detail::segment_distance(s.start, s.end, x, y), 0.0, 1.0);
}

/// Applies droplets then streaks, each on the result of the previous one.
/// Pixels with zero coverage under every element are left untouched.
[[nodiscard]] inline RasterImage apply_corruption(const RasterImage& clear, const DropletField& field) {
    RasterImage out = clear;
    const int w = clear.width();
    const int h = clear.height();

    for (const auto& d : field.droplets) {
        d.validate();
        const auto rect = detail::clip_rect(d.center.x - d.radius, d.center.y - d.radius, d.center.x + d.radius,
                                            d.center.y + d.radius, w, h);
        if (rect.empty()) continue;
        const RasterImage before = out;
        const double inv_mag = 1.0 / d.magnification;
        detail::blend_blurred(
            out, rect, d.blur_sigma,
            [&](int c, int x, int y) {
                return detail::bilinear(before, c, d.center.x + (x - d.center.x) * inv_mag,
                                        d.center.y + (y - d.center.y) * inv_mag);
            },
            [&](int x, int y) { return droplet_alpha(d, x, y); });
    }

    for (const auto& s : field.streaks) {
        s.validate();
        const double r = 0.5 * s.width;
        const auto rect = detail::clip_rect(std::min(s.start.x, s.end.x) - r, std::min(s.start.y, s.end.y) - r,
                                            std::max(s.start.x, s.end.x) + r, std::max(s.start.y, s.end.y) + r, w, h);
        if (rect.empty()) continue;
        const RasterImage before = out;
        detail::blend_blurred(
            out, rect, s.blur_sigma, [&](int c, int x, int y) { return before.at(c, y, x); },
            [&](int x, int y) { return streak_alpha(s, x, y); });
    }
    return out;
}

/// Pixels with positive coverage under any droplet or streak (row-major, w*h).
[[nodiscard]] inline std::vector<bool> corruption_support(const DropletField& field, int width, int height) {
    std::vector<bool> mask(static_cast<std::size_t>(width) * height, false);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            bool hit = false;
            for (const auto& d : field.droplets) hit = hit || droplet_alpha(d, x, y) > 0.0;
            for (const auto& s : field.streaks) hit = hit || streak_alpha(s, x, y) > 0.0;
            mask[static_cast<std::size_t>(y) * width + x] = hit;
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Serialization

[[nodiscard]] inline nlohmann::json to_json(const DropletField& field) {
    nlohmann::json drops = nlohmann::json::array();
    for (const auto& d : field.droplets) {
        drops.push_back({{"center", {d.center.x, d.center.y}},
                         {"radius", d.radius},
                         {"magnification", d.magnification},
                         {"blur_sigma", d.blur_sigma}});
    }
    nlohmann::json streaks = nlohmann::json::array();
    for (const auto& s : field.streaks) {
        streaks.push_back({{"start", {s.start.x, s.start.y}},
                           {"end", {s.end.x, s.end.y}},
                           {"width", s.width},
                           {"blur_sigma", s.blur_sigma}});
    }
    return {{"seed", field.seed}, {"droplets", drops}, {"streaks", streaks}};
}

[[nodiscard]] inline DropletField droplet_field_from_json(const nlohmann::json& j) {
    auto point = [](const nlohmann::json& p) { return Point{p.at(0).get<double>(), p.at(1).get<double>()}; };
    DropletField field;
    field.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& d : j.at("droplets")) {
        Droplet drop{point(d.at("center")), d.at("radius").get<double>(), d.at("magnification").get<double>(),
                     d.at("blur_sigma").get<double>()};
        drop.validate();
        field.droplets.push_back(drop);
    }
    for (const auto& s : j.at("streaks")) {
        Streak streak{point(s.at("start")), point(s.at("end")), s.at("width").get<double>(),
                      s.at("blur_sigma").get<double>()};
        streak.validate();
        field.streaks.push_back(streak);
    }
    return field;
}

// ---------------------------------------------------------------------------
// Scenes

struct SceneSpec {
    int car_count = 0;
    std::string background = "road";  // "road" | "plain"
    std::uint64_t seed = 0;
    int glyph_scale = 1;
    /// Half-width of the uniform per-pixel jitter on the asphalt.
    double texture = 0.04;
};

struct RenderedScene {
    RasterImage image;
    SceneGroundTruth truth;
};

namespace detail {

inline void paint_glyph(std::vector<double>& planar, int w, int h, const CarGlyph& glyph, int x0, int y0) {
    for (const auto& t : glyph.texels()) {
        for (int c = 0; c < 3; ++c) {
            planar[(static_cast<std::size_t>(c) * h + (y0 + t.dy)) * w + (x0 + t.dx)] = t.color[c];
        }
    }
}

[[nodiscard]] inline int horizon_row(int h) { return (3 * h) / 10; }

}  // namespace detail

/// Renders a road-like backdrop with `car_count` non-overlapping car glyphs.
[[nodiscard]] inline RenderedScene render_scene(const SceneSpec& spec, Dims dims) {
    const int w = dims.width;
    const int h = dims.height;
    if (spec.car_count < 0) fail(ErrorKind::InvalidArgument, "car_count must be >= 0");
    if (spec.background != "road" && spec.background != "plain") {
        fail(ErrorKind::InvalidArgument, "unknown background style '" + spec.background + "'");
    }
    const CarGlyph glyph(spec.glyph_scale);
    Rng rng(spec.seed);

    std::vector<double> planar(static_cast<std::size_t>(3) * w * h);
    auto px = [&](int c, int y, int x) -> double& { return planar[(static_cast<std::size_t>(c) * h + y) * w + x]; };

    const bool road = spec.background == "road";
    const int horizon = road ? detail::horizon_row(h) : 0;
    const double base = uniform(rng, 0.34, 0.44);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (y < horizon) {
                const double t = static_cast<double>(y) / std::max(1, horizon - 1);
                px(0, y, x) = 0.45 + 0.25 * t;
                px(1, y, x) = 0.62 + 0.18 * t;
                px(2, y, x) = 0.90 + 0.05 * t;
            } else {
                const double g = std::clamp(base + uniform(rng, -spec.texture, spec.texture), 0.0, 1.0);
                px(0, y, x) = g;
                px(1, y, x) = g;
                px(2, y, x) = std::min(1.0, g + 0.02);
            }
        }
    }
    if (road) {
        const int lane_y = (2 * h) / 3;
        const int thickness = std::max(1, h / 48);
        const int dash = std::max(2, w / 8);
        for (int y = lane_y; y < std::min(h, lane_y + thickness); ++y) {
            for (int x = 0; x < w; ++x) {
                if ((x / dash) % 2 == 0) {
                    for (int c = 0; c < 3; ++c) px(c, y, x) = 0.92;
                }
            }
        }
    }

    SceneGroundTruth truth;
    if (spec.car_count > 0) {
        if (glyph.width() > w || glyph.height() > h) {
            fail(ErrorKind::PlacementFailure, "car glyph does not fit in the frame");
        }
        // Prefer the road area; fall back to the whole frame when it is too short.
        int y_min = horizon;
        if (h - glyph.height() < y_min) y_min = 0;
        const int x_span = w - glyph.width() + 1;
        const int y_span = h - glyph.height() - y_min + 1;
        // Greedy rejection sampling; a layout that dead-ends is discarded and redrawn.
        constexpr int kAttemptsPerCar = 200;
        constexpr int kLayouts = 20;
        for (int layout = 0; truth.boxes.size() < static_cast<std::size_t>(spec.car_count); ++layout) {
            if (layout == kLayouts) {
                fail(ErrorKind::PlacementFailure, "could not place " + std::to_string(spec.car_count) +
                                                      " non-overlapping cars in " + std::to_string(w) + "x" +
                                                      std::to_string(h));
            }
            truth = {};
            for (int attempts = 0; attempts < kAttemptsPerCar && truth.boxes.size() < static_cast<std::size_t>(spec.car_count);) {
                const Box candidate{static_cast<int>(uniform_index(rng, x_span)),
                                    y_min + static_cast<int>(uniform_index(rng, y_span)), glyph.width(), glyph.height()};
                const bool overlaps = std::any_of(truth.boxes.begin(), truth.boxes.end(),
                                                  [&](const Box& b) { return b.intersects(candidate); });
                if (overlaps) {
                    ++attempts;
                    continue;
                }
                truth.boxes.push_back(candidate);
                truth.labels.emplace_back("car");
                attempts = 0;
            }
        }
        for (const auto& b : truth.boxes) detail::paint_glyph(planar, w, h, glyph, b.x, b.y);
    }

    return {RasterImage(w, h, std::move(planar)), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Paired dataset synthesis

/// Defaults are the desk-scale setting used by the end-to-end check: 2x
/// glyphs and a flat road keep cars resolvable at 64x64, and the droplet
/// density leaves roughly one car in seven detectable on the raw inputs.
struct SynthParams {
    Dims dims{64, 64};
    /// Droplets per megapixel.
    double density = 10000.0;
    int cars_min = 1;
    int cars_max = 3;
    std::string background = "road";
    int glyph_scale = 2;
    double texture = 0.0;
    DropletParams droplets;
    friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

struct SyntheticSample {
    AlignedPair pair;
    SceneGroundTruth truth;
    DropletField field;
};

inline constexpr std::uint64_t kCarCountStream = 0x63617273;   // "cars"
inline constexpr std::uint64_t kDropletStream = 0x64726f70;    // "drop"

[[nodiscard]] inline std::string synthetic_pair_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "pair_%06zu", index);
    return buf;
}

[[nodiscard]] inline SyntheticSample synthesize_sample(std::size_t index, const SynthParams& params,
                                                       std::uint64_t seed) {
    if (params.cars_min < 0 || params.cars_max < params.cars_min) {
        fail(ErrorKind::InvalidArgument, "car count range must satisfy 0 <= min <= max");
    }
    SceneSpec scene;
    scene.seed = seed ^ static_cast<std::uint64_t>(index);
    scene.background = params.background;
    scene.glyph_scale = params.glyph_scale;
    scene.texture = params.texture;
    Rng count_rng(derive_seed(seed, kCarCountStream, index));
    scene.car_count =
        params.cars_min + static_cast<int>(uniform_index(count_rng, params.cars_max - params.cars_min + 1));

    auto [clear, truth] = render_scene(scene, params.dims);
    DropletField field =
        sample_droplet_field(params.dims, params.density, derive_seed(seed, kDropletStream, index), params.droplets);
    RasterImage distorted = apply_corruption(clear, field);
    return {AlignedPair(synthetic_pair_id(index), std::move(distorted), std::move(clear)), std::move(truth),
            std::move(field)};
}

/// Pair i renders its scene from seed ^ i and corrupts it with a droplet field
/// drawn from an independent derived seed.
[[nodiscard]] inline std::vector<SyntheticSample> synthesize_dataset(std::size_t n_pairs, const SynthParams& params,
                                                                     std::uint64_t seed) {
    std::vector<SyntheticSample> out;
    out.reserve(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) out.push_back(synthesize_sample(i, params, seed));
    return out;
}

}  // namespace derain
