#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "derain/error.hpp"

namespace derain {

/// Three-channel floating point image, planar (channel, row, column) storage,
/// every value in [0, 1].
class RasterImage {
public:
    static constexpr int kChannels = 3;
    static constexpr int kMinSide = 8;

    RasterImage() = default;

    RasterImage(int width, int height, double fill = 0.0) : width_(width), height_(height) {
        check_dims(width, height);
        check_value(fill);
        values_.assign(static_cast<std::size_t>(kChannels) * width * height, fill);
    }

    RasterImage(int width, int height, std::vector<double> planar)
        : width_(width), height_(height), values_(std::move(planar)) {
        check_dims(width, height);
        if (values_.size() != static_cast<std::size_t>(kChannels) * width * height) {
            fail(ErrorKind::InvalidImage, "value buffer size does not match dimensions");
        }
        for (const double v : values_) check_value(v);
    }

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] static constexpr int channels() noexcept { return kChannels; }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }
    [[nodiscard]] std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(width_) * height_;
    }

    [[nodiscard]] double at(int c, int y, int x) const noexcept { return values_[index(c, y, x)]; }

    void set(int c, int y, int x, double v) {
        check_value(v);
        values_[index(c, y, x)] = v;
    }

    /// Samples with clamp-to-edge addressing.
    [[nodiscard]] double clamped(int c, int y, int x) const noexcept {
        return at(c, std::clamp(y, 0, height_ - 1), std::clamp(x, 0, width_ - 1));
    }

    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

    [[nodiscard]] bool same_dims(const RasterImage& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    [[nodiscard]] std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    static void check_dims(int width, int height) {
        if (width < kMinSide || height < kMinSide) {
            fail(ErrorKind::InvalidImage, "image must be at least 8x8, got " + std::to_string(width) +
                                              "x" + std::to_string(height));
        }
    }

    static void check_value(double v) {
        if (!(v >= 0.0 && v <= 1.0)) {
            fail(ErrorKind::InvalidImage, "pixel value outside [0,1]: " + std::to_string(v));
        }
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

/// Rounds every value onto the 8-bit grid k/255 used by on-disk storage.
[[nodiscard]] inline RasterImage quantize_8bit(const RasterImage& image) {
    std::vector<double> out(image.values().begin(), image.values().end());
    for (double& v : out) v = std::round(v * 255.0) / 255.0;
    return RasterImage(image.width(), image.height(), std::move(out));
}

/// Mean absolute difference over all pixel-channels.
[[nodiscard]] inline double mean_abs_diff(const RasterImage& a, const RasterImage& b) {
    if (!a.same_dims(b)) fail(ErrorKind::ShapeMismatch, "mean_abs_diff on images of different size");
    const auto va = a.values();
    const auto vb = b.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) sum += std::abs(va[i] - vb[i]);
    return sum / static_cast<double>(va.size());
}

[[nodiscard]] inline cv::Mat to_bgr8(const RasterImage& image) {
    cv::Mat mat(image.height(), image.width(), CV_8UC3);
    for (int y = 0; y < image.height(); ++y) {
        auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                // OpenCV stores BGR; our channel 0 is red.
                row[x][2 - c] = static_cast<unsigned char>(std::lround(image.at(c, y, x) * 255.0));
            }
        }
    }
    return mat;
}

[[nodiscard]] inline RasterImage from_bgr8(const cv::Mat& mat) {
    if (mat.type() != CV_8UC3) fail(ErrorKind::DecodeFailure, "expected an 8-bit 3-channel image");
    const int w = mat.cols;
    const int h = mat.rows;
    std::vector<double> planar(static_cast<std::size_t>(3) * w * h);
    for (int y = 0; y < h; ++y) {
        const auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                planar[(static_cast<std::size_t>(c) * h + y) * w + x] = row[x][2 - c] / 255.0;
            }
        }
    }
    return RasterImage(w, h, std::move(planar));
}

/// Decodes any format OpenCV understands into a RasterImage (8-bit values map via v/255).
[[nodiscard]] inline RasterImage read_image(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (mat.empty()) fail(ErrorKind::DecodeFailure, "cannot decode " + path.string());
    try {
        return from_bgr8(mat);
    } catch (const Error& e) {
        fail(ErrorKind::DecodeFailure, path.string() + ": " + e.what());
    }
}

/// Writes an 8-bit RGB PNG. Values are rounded to the nearest k/255.
inline void write_png(const std::filesystem::path& path, const RasterImage& image) {
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), to_bgr8(image), {cv::IMWRITE_PNG_COMPRESSION, 6});
    } catch (const cv::Exception& e) {
        fail(ErrorKind::IoFailure, path.string() + ": " + e.what());
    }
    if (!ok) fail(ErrorKind::IoFailure, "cannot write " + path.string());
}

}  // namespace derain
