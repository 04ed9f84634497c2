#pragma once

#include <cstddef>
#include <vector>

#include "derain/error.hpp"
#include "derain/image.hpp"

namespace derain {

/// Dense (channels, height, width) activation volume for a single sample.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
    [[nodiscard]] std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
    [[nodiscard]] double& at(int c, int y, int x) noexcept {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    [[nodiscard]] double at(int c, int y, int x) const noexcept {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    [[nodiscard]] bool same_shape(const Tensor& o) const noexcept {
        return channels == o.channels && height == o.height && width == o.width;
    }
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

[[nodiscard]] inline Tensor to_tensor(const RasterImage& image) {
    Tensor t(RasterImage::kChannels, image.height(), image.width());
    const auto v = image.values();
    t.data.assign(v.begin(), v.end());
    return t;
}

/// Converts a 3-channel tensor with values in [0,1] back to an image.
[[nodiscard]] inline RasterImage to_image(const Tensor& t) {
    if (t.channels != RasterImage::kChannels) fail(ErrorKind::ShapeMismatch, "image tensors need 3 channels");
    return RasterImage(t.width, t.height, t.data);
}

}  // namespace derain
