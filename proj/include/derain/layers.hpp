#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "derain/tensor.hpp"

/// Forward and backward kernels for the layer types used by the generator and
/// discriminator. Every backward routine accumulates (+=) into its parameter
/// gradient spans so several passes can share one gradient buffer.
namespace derain::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kLeakySlope = 0.2;

[[nodiscard]] constexpr int conv_out_size(int n, int kernel, int stride, int pad) noexcept {
    return (n + 2 * pad - kernel) / stride + 1;
}

[[nodiscard]] constexpr int conv_transpose_out_size(int n, int kernel, int stride, int pad) noexcept {
    return (n - 1) * stride - 2 * pad + kernel;
}

/// Unfolds (C,H,W) into a (C*K*K) x (OH*OW) patch matrix; out-of-image taps are zero.
inline void im2col(const double* image, int channels, int height, int width, int kernel, int stride, int pad,
                   int out_h, int out_w, double* cols) {
    const int positions = out_h * out_w;
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                double* row = cols + static_cast<std::size_t>((c * kernel + ky) * kernel + kx) * positions;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    double* dst = row + oy * out_w;
                    if (iy < 0 || iy >= height) {
                        for (int ox = 0; ox < out_w; ++ox) dst[ox] = 0.0;
                        continue;
                    }
                    const double* src = image + (static_cast<std::size_t>(c) * height + iy) * width;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < width) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters-adds patch columns back onto (C,H,W).
inline void col2im(const double* cols, int channels, int height, int width, int kernel, int stride, int pad,
                   int out_h, int out_w, double* image) {
    const int positions = out_h * out_w;
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const double* row = cols + static_cast<std::size_t>((c * kernel + ky) * kernel + kx) * positions;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= height) continue;
                    double* dst = image + (static_cast<std::size_t>(c) * height + iy) * width;
                    const double* src = row + oy * out_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < width) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

struct ConvShape {
    int in_channels;
    int out_channels;
    int kernel;
    int stride;
    int pad;
};

// ---------------------------------------------------------------------------
// Convolution. Weight layout [out][in][k][k].

[[nodiscard]] inline Tensor conv2d_forward(const Tensor& x, const ConvShape& s, std::span<const double> weight,
                                           std::span<const double> bias, std::vector<double>& cols) {
    const int oh = conv_out_size(x.height, s.kernel, s.stride, s.pad);
    const int ow = conv_out_size(x.width, s.kernel, s.stride, s.pad);
    const int rows = s.in_channels * s.kernel * s.kernel;
    const int positions = oh * ow;
    cols.resize(static_cast<std::size_t>(rows) * positions);
    im2col(x.data.data(), x.channels, x.height, x.width, s.kernel, s.stride, s.pad, oh, ow, cols.data());

    Tensor y(s.out_channels, oh, ow);
    MatrixMap out(y.data.data(), s.out_channels, positions);
    out.noalias() = ConstMatrixMap(weight.data(), s.out_channels, rows) * ConstMatrixMap(cols.data(), rows, positions);
    if (!bias.empty()) {
        for (int c = 0; c < s.out_channels; ++c) out.row(c).array() += bias[c];
    }
    return y;
}

/// Returns dL/dx (empty tensor when `need_input_grad` is false).
inline Tensor conv2d_backward(const Tensor& dy, const Tensor& x, const ConvShape& s, std::span<const double> weight,
                              const std::vector<double>& cols, std::span<double> dweight, std::span<double> dbias,
                              bool need_input_grad) {
    const int rows = s.in_channels * s.kernel * s.kernel;
    const int positions = dy.height * dy.width;
    ConstMatrixMap g(dy.data.data(), s.out_channels, positions);
    if (!dweight.empty()) {
        MatrixMap(dweight.data(), s.out_channels, rows).noalias() +=
            g * ConstMatrixMap(cols.data(), rows, positions).transpose();
    }
    if (!dbias.empty()) {
        for (int c = 0; c < s.out_channels; ++c) dbias[c] += g.row(c).sum();
    }
    if (!need_input_grad) return {};
    std::vector<double> dcols(static_cast<std::size_t>(rows) * positions);
    MatrixMap(dcols.data(), rows, positions).noalias() =
        ConstMatrixMap(weight.data(), s.out_channels, rows).transpose() * g;
    Tensor dx(x.channels, x.height, x.width);
    col2im(dcols.data(), x.channels, x.height, x.width, s.kernel, s.stride, s.pad, dy.height, dy.width,
           dx.data.data());
    return dx;
}

// ---------------------------------------------------------------------------
// Transposed convolution. Weight layout [in][out][k][k].

[[nodiscard]] inline Tensor conv_transpose2d_forward(const Tensor& x, const ConvShape& s,
                                                     std::span<const double> weight, std::span<const double> bias) {
    const int oh = conv_transpose_out_size(x.height, s.kernel, s.stride, s.pad);
    const int ow = conv_transpose_out_size(x.width, s.kernel, s.stride, s.pad);
    const int rows = s.out_channels * s.kernel * s.kernel;
    const int positions = x.height * x.width;
    std::vector<double> cols(static_cast<std::size_t>(rows) * positions);
    MatrixMap(cols.data(), rows, positions).noalias() =
        ConstMatrixMap(weight.data(), s.in_channels, rows).transpose() *
        ConstMatrixMap(x.data.data(), s.in_channels, positions);
    Tensor y(s.out_channels, oh, ow);
    col2im(cols.data(), s.out_channels, oh, ow, s.kernel, s.stride, s.pad, x.height, x.width, y.data.data());
    if (!bias.empty()) {
        const std::size_t plane = y.plane();
        for (int c = 0; c < s.out_channels; ++c) {
            for (std::size_t i = 0; i < plane; ++i) y.data[c * plane + i] += bias[c];
        }
    }
    return y;
}

inline Tensor conv_transpose2d_backward(const Tensor& dy, const Tensor& x, const ConvShape& s,
                                        std::span<const double> weight, std::span<double> dweight,
                                        std::span<double> dbias, bool need_input_grad) {
    const int rows = s.out_channels * s.kernel * s.kernel;
    const int positions = x.height * x.width;
    std::vector<double> dcols(static_cast<std::size_t>(rows) * positions);
    im2col(dy.data.data(), dy.channels, dy.height, dy.width, s.kernel, s.stride, s.pad, x.height, x.width,
           dcols.data());
    ConstMatrixMap dc(dcols.data(), rows, positions);
    if (!dweight.empty()) {
        MatrixMap(dweight.data(), s.in_channels, rows).noalias() +=
            ConstMatrixMap(x.data.data(), s.in_channels, positions) * dc.transpose();
    }
    if (!dbias.empty()) {
        const std::size_t plane = dy.plane();
        for (int c = 0; c < s.out_channels; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += dy.data[c * plane + i];
            dbias[c] += acc;
        }
    }
    if (!need_input_grad) return {};
    Tensor dx(x.channels, x.height, x.width);
    MatrixMap(dx.data.data(), s.in_channels, positions).noalias() =
        ConstMatrixMap(weight.data(), s.in_channels, rows) * dc;
    return dx;
}

// ---------------------------------------------------------------------------
// Per-sample (instance) normalization with affine scale/shift.

struct NormCache {
    std::vector<double> normalized;  // x-hat
    std::vector<double> inv_std;     // per channel
};

[[nodiscard]] inline Tensor instance_norm_forward(const Tensor& x, std::span<const double> gamma,
                                                  std::span<const double> beta, NormCache& cache) {
    const std::size_t plane = x.plane();
    Tensor y(x.channels, x.height, x.width);
    cache.normalized.resize(x.size());
    cache.inv_std.resize(x.channels);
    for (int c = 0; c < x.channels; ++c) {
        const double* in = x.data.data() + c * plane;
        double mean = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mean += in[i];
        mean /= static_cast<double>(plane);
        double var = 0.0;
        for (std::size_t i = 0; i < plane; ++i) var += (in[i] - mean) * (in[i] - mean);
        var /= static_cast<double>(plane);
        const double inv_std = 1.0 / std::sqrt(var + kNormEpsilon);
        cache.inv_std[c] = inv_std;
        double* xhat = cache.normalized.data() + c * plane;
        double* out = y.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            xhat[i] = (in[i] - mean) * inv_std;
            out[i] = gamma[c] * xhat[i] + beta[c];
        }
    }
    return y;
}

[[nodiscard]] inline Tensor instance_norm_backward(const Tensor& dy, const NormCache& cache,
                                                   std::span<const double> gamma, std::span<double> dgamma,
                                                   std::span<double> dbeta) {
    const std::size_t plane = dy.plane();
    const double n = static_cast<double>(plane);
    Tensor dx(dy.channels, dy.height, dy.width);
    for (int c = 0; c < dy.channels; ++c) {
        const double* g = dy.data.data() + c * plane;
        const double* xhat = cache.normalized.data() + c * plane;
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            sum_g += g[i];
            sum_gx += g[i] * xhat[i];
        }
        if (!dgamma.empty()) dgamma[c] += sum_gx;
        if (!dbeta.empty()) dbeta[c] += sum_g;
        const double scale = gamma[c] * cache.inv_std[c] / n;
        double* out = dx.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) out[i] = scale * (n * g[i] - sum_g - xhat[i] * sum_gx);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Pointwise activations

[[nodiscard]] inline Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : slope * v;
    return y;
}

/// Gradient through a leaky ReLU evaluated at pre-activation `x`.
[[nodiscard]] inline Tensor leaky_relu_backward(const Tensor& dy, const Tensor& x, double slope) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(x.data[i] > 0.0)) dx.data[i] *= slope;
    }
    return dx;
}

[[nodiscard]] inline Tensor tanh_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = std::tanh(v);
    return y;
}

[[nodiscard]] inline Tensor tanh_backward(const Tensor& dy, const Tensor& y) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= 1.0 - y.data[i] * y.data[i];
    return dx;
}

[[nodiscard]] inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.height != b.height || a.width != b.width) fail(ErrorKind::ShapeMismatch, "concat spatial mismatch");
    Tensor y(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return y;
}

/// Splits a gradient of concat(a, b) into its two halves.
[[nodiscard]] inline std::pair<Tensor, Tensor> split_channels(const Tensor& g, int first_channels) {
    Tensor a(first_channels, g.height, g.width);
    Tensor b(g.channels - first_channels, g.height, g.width);
    const auto cut = g.data.begin() + static_cast<std::ptrdiff_t>(a.size());
    std::copy(g.data.begin(), cut, a.data.begin());
    std::copy(cut, g.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

/// Maps [0,1] image values to the [-1,1] range the networks work in.
[[nodiscard]] inline Tensor to_signed(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = 2.0 * v - 1.0;
    return y;
}

}  // namespace derain::nn
