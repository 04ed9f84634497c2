#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace derain;
using testing_support::random_image;

namespace {

// Straightforward 2D reference for one droplet: inverse-magnify with bilinear
// sampling, full 2D Gaussian with clamped taps, then alpha blend.
RasterImage reference_droplet(const RasterImage& img, const Droplet& d) {
    const int w = img.width(), h = img.height();
    auto sample = [&](int c, double x, double y) {
        auto px = [&](int xx, int yy) {
            return img.at(c, std::min(std::max(yy, 0), h - 1), std::min(std::max(xx, 0), w - 1));
        };
        const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
        const double fx = x - x0, fy = y - y0;
        return (1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0) + (1 - fx) * fy * px(x0, y0 + 1) +
               fx * fy * px(x0 + 1, y0 + 1);
    };
    auto warped = [&](int c, int x, int y) {
        return sample(c, d.center.x + (x - d.center.x) / d.magnification,
                      d.center.y + (y - d.center.y) / d.magnification);
    };
    const int r = static_cast<int>(std::ceil(3.0 * d.blur_sigma));
    std::vector<double> g;
    double norm = 0.0;
    for (int t = -r; t <= r; ++t) {
        g.push_back(std::exp(-t * t / (2 * d.blur_sigma * d.blur_sigma)));
        norm += g.back();
    }
    std::vector<double> out(img.values().begin(), img.values().end());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double a = std::clamp(d.radius - std::hypot(x - d.center.x, y - d.center.y), 0.0, 1.0);
            if (a <= 0) continue;
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int ty = -r; ty <= r; ++ty) {
                    for (int tx = -r; tx <= r; ++tx) {
                        const int xx = std::min(std::max(x + tx, 0), w - 1);
                        const int yy = std::min(std::max(y + ty, 0), h - 1);
                        acc += g[ty + r] * g[tx + r] / (norm * norm) * warped(c, xx, yy);
                    }
                }
                const double v = a * acc + (1 - a) * img.at(c, y, x);
                out[(static_cast<std::size_t>(c) * h + y) * w + x] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return RasterImage(w, h, std::move(out));
}

double max_abs_diff(const RasterImage& a, const RasterImage& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

}  // namespace

TEST(DropletField, CountFollowsDensity) {
    // 64x64 = 0.004096 MP, so 2500/MP gives a Poisson mean of 10.24 droplets.
    const double mean = 2500.0 * 64 * 64 / 1e6;
    double sum = 0.0;
    const int n = 1000;
    for (int s = 0; s < n; ++s) sum += static_cast<double>(sample_droplet_field({64, 64}, 2500.0, s).droplets.size());
    EXPECT_NEAR(sum / n, mean, 5.0 * std::sqrt(mean / n));
}

TEST(DropletField, ZeroDensityIsEmpty) {
    const auto f = sample_droplet_field({64, 64}, 0.0, 3);
    EXPECT_TRUE(f.droplets.empty());
    EXPECT_TRUE(f.streaks.empty());
    const auto img = random_image(64, 64, 1);
    EXPECT_EQ(apply_corruption(img, f), img);
}

TEST(DropletField, ParametersWithinRanges) {
    const DropletParams p;
    for (int s = 0; s < 50; ++s) {
        const auto f = sample_droplet_field({80, 60}, 4000.0, s, p);
        for (const auto& d : f.droplets) {
            EXPECT_GE(d.radius, 60 * p.radius_min - 1e-9);
            EXPECT_LE(d.radius, 60 * p.radius_max + 1e-9);
            EXPECT_GE(d.magnification, p.magnification_min);
            EXPECT_LE(d.magnification, p.magnification_max);
            EXPECT_GE(d.center.x, 0.0);
            EXPECT_LT(d.center.x, 80.0);
        }
        for (const auto& st : f.streaks) EXPECT_NO_THROW(st.validate());
    }
}

TEST(DropletField, JsonRoundTrip) {
    const auto f = sample_droplet_field({64, 64}, 6000.0, 17);
    EXPECT_EQ(droplet_field_from_json(nlohmann::json::parse(to_json(f).dump())), f);
}

TEST(DropletField, InvalidDensity) {
    EXPECT_ERROR_KIND((void)sample_droplet_field({64, 64}, -1.0, 0), ErrorKind::InvalidArgument);
}

TEST(Corruption, SingleDropletMatchesReference) {
    const auto img = random_image(40, 32, 8, false);
    for (const Droplet d : {Droplet{{20.3, 15.7}, 6.2, 1.9, 1.1}, Droplet{{2.0, 30.5}, 5.0, 2.4, 0.8},
                            Droplet{{39.0, 0.2}, 7.5, 1.6, 1.7}}) {
        DropletField field;
        field.droplets = {d};
        EXPECT_LT(max_abs_diff(apply_corruption(img, field), reference_droplet(img, d)), 1e-6);
    }
}

TEST(Corruption, LocalityOutsideSupportIsBitExact) {
    for (int s = 0; s < 10; ++s) {
        const auto img = random_image(64, 48, 100 + s, false);
        const auto field = sample_droplet_field({64, 48}, 3000.0, s);
        const auto out = apply_corruption(img, field);
        const auto support = corruption_support(field, 64, 48);
        for (int y = 0; y < 48; ++y) {
            for (int x = 0; x < 64; ++x) {
                if (support[static_cast<std::size_t>(y) * 64 + x]) continue;
                for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(c, y, x), img.at(c, y, x));
            }
        }
    }
}

TEST(Corruption, ChangesPixelsInsideDroplet) {
    const auto img = random_image(32, 32, 2, false);
    DropletField field;
    field.droplets = {{{16, 16}, 6, 2.0, 1.0}};
    const auto out = apply_corruption(img, field);
    EXPECT_GT(mean_abs_diff(out, img), 0.0);
    EXPECT_NE(out.at(0, 16, 16), img.at(0, 16, 16));
}

TEST(Corruption, Deterministic) {
    const auto img = random_image(64, 64, 3);
    const auto f1 = sample_droplet_field({64, 64}, 5000.0, 77);
    const auto f2 = sample_droplet_field({64, 64}, 5000.0, 77);
    EXPECT_EQ(f1, f2);
    EXPECT_EQ(apply_corruption(img, f1), apply_corruption(img, f2));
}

TEST(Scene, BoxesMatchPaintedGlyphs) {
    const CarGlyph glyph;
    for (int s = 0; s < 20; ++s) {
        const auto scene = render_scene({1 + s % 4, "road", static_cast<std::uint64_t>(s), 1}, {64, 64});
        ASSERT_EQ(scene.truth.boxes.size(), static_cast<std::size_t>(1 + s % 4));
        scene.truth.validate(64, 64);
        for (std::size_t i = 0; i < scene.truth.boxes.size(); ++i) {
            const auto& b = scene.truth.boxes[i];
            EXPECT_EQ(b.w, glyph.width());
            EXPECT_EQ(b.h, glyph.height());
            for (std::size_t j = i + 1; j < scene.truth.boxes.size(); ++j) EXPECT_FALSE(b.intersects(scene.truth.boxes[j]));
            for (const auto& t : glyph.texels()) {
                for (int c = 0; c < 3; ++c) ASSERT_EQ(scene.image.at(c, b.y + t.dy, b.x + t.dx), t.color[c]);
            }
        }
    }
}

TEST(Scene, EmptySceneHasNoBoxes) {
    const auto scene = render_scene({0, "plain", 5, 1}, {32, 32});
    EXPECT_TRUE(scene.truth.boxes.empty());
}

TEST(Scene, PlacementFailureWhenCrowded) {
    EXPECT_ERROR_KIND((void)render_scene({20, "road", 1, 1}, {32, 32}), ErrorKind::PlacementFailure);
    EXPECT_ERROR_KIND((void)render_scene({1, "road", 1, 4}, {32, 32}), ErrorKind::PlacementFailure);
}

TEST(Synthesis, DeterministicAndIndexStable) {
    SynthParams p;
    const auto a = synthesize_dataset(6, p, 42);
    const auto b = synthesize_dataset(6, p, 42);
    const auto c = synthesize_dataset(3, p, 42);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(a[i].pair, b[i].pair);
        EXPECT_EQ(a[i].field, b[i].field);
        EXPECT_EQ(a[i].truth, b[i].truth);
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].pair, c[i].pair);
    EXPECT_EQ(a[0].pair.id(), "pair_000000");
    EXPECT_NE(synthesize_dataset(1, p, 43)[0].pair, a[0].pair);
}

TEST(Synthesis, DistortedIsCorruptedClear) {
    SynthParams p;
    const auto s = synthesize_sample(4, p, 9);
    EXPECT_EQ(s.pair.distorted(), apply_corruption(s.pair.clear(), s.field));
    const int n = static_cast<int>(s.truth.boxes.size());
    EXPECT_GE(n, p.cars_min);
    EXPECT_LE(n, p.cars_max);
}
