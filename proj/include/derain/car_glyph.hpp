#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "derain/error.hpp"

namespace derain {

using Rgb = std::array<double, 3>;

/// Two-tone car sprite on a 12x8 unit grid: light cabin on top, red body,
/// two dark wheels. `scale` multiplies the grid in both directions. Pixels of
/// the bounding box that are not part of the sprite are transparent.
class CarGlyph {
public:
    static constexpr int kUnitWidth = 12;
    static constexpr int kUnitHeight = 8;
    static constexpr Rgb kCabin{0.62, 0.82, 0.96};
    static constexpr Rgb kBody{0.86, 0.12, 0.10};
    static constexpr Rgb kWheel{0.06, 0.06, 0.06};

    explicit CarGlyph(int scale = 1) : scale_(scale) {
        if (scale < 1) fail(ErrorKind::InvalidArgument, "glyph scale must be >= 1");
        for (int y = 0; y < height(); ++y) {
            for (int x = 0; x < width(); ++x) {
                if (auto color = shade(x, y)) texels_.push_back({x, y, *color});
            }
        }
    }

    struct Texel {
        int dx;
        int dy;
        Rgb color;
    };

    [[nodiscard]] int scale() const noexcept { return scale_; }
    [[nodiscard]] int width() const noexcept { return kUnitWidth * scale_; }
    [[nodiscard]] int height() const noexcept { return kUnitHeight * scale_; }
    /// Opaque pixels in row-major order.
    [[nodiscard]] const std::vector<Texel>& texels() const noexcept { return texels_; }

private:
    [[nodiscard]] std::optional<Rgb> shade(int x, int y) const {
        const double u = (x + 0.5) / scale_;
        const double v = (y + 0.5) / scale_;
        if (v < 3.0) {
            if (u >= 3.0 && u < 9.0) return kCabin;
            return std::nullopt;
        }
        if (v < 6.0) return kBody;
        for (const double cx : {2.5, 9.5}) {
            if (std::hypot(u - cx, v - 6.5) <= 1.6) return kWheel;
        }
        return std::nullopt;
    }

    int scale_;
    std::vector<Texel> texels_;
};

}  // namespace derain
