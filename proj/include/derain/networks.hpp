#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "derain/archive.hpp"
#include "derain/corruption.hpp"
#include "derain/error.hpp"
#include "derain/image.hpp"
#include "derain/layers.hpp"
#include "derain/tensor.hpp"
#include "derain/util.hpp"

namespace derain {

/// Encoder-decoder with skip connections. Each of the `depth` encoder stages
/// halves the resolution with a stride-2 4x4 convolution; channel count starts
/// at `base_channels` and doubles per stage up to 8x base.
struct GeneratorConfig {
    int base_channels = 8;
    int depth = 3;
    Dims input_dims{64, 64};
    /// Dropout applied after normalization in the innermost decoder blocks (training only).
    double dropout_rate = 0.5;
    int dropout_blocks = 1;

    [[nodiscard]] int channels(int stage) const noexcept { return base_channels * std::min(1 << stage, 8); }

    void validate() const {
        if (base_channels < 4) fail(ErrorKind::ConfigInvalid, "generator base_channels must be >= 4");
        if (depth < 2 || depth > 8) fail(ErrorKind::ConfigInvalid, "generator depth must be in [2,8]");
        const int unit = 1 << depth;
        if (input_dims.width <= 0 || input_dims.height <= 0 || input_dims.width % unit != 0 ||
            input_dims.height % unit != 0) {
            fail(ErrorKind::ConfigInvalid, "input dims " + std::to_string(input_dims.width) + "x" +
                                               std::to_string(input_dims.height) + " not divisible by 2^depth = " +
                                               std::to_string(unit));
        }
        if (std::min(input_dims.width, input_dims.height) < RasterImage::kMinSide) {
            fail(ErrorKind::ConfigInvalid, "input dims below the 8-pixel minimum");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(ErrorKind::ConfigInvalid, "dropout_rate must be in [0,1)");
        if (dropout_blocks < 0) fail(ErrorKind::ConfigInvalid, "dropout_blocks must be >= 0");
    }
    friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GeneratorConfig, base_channels, depth, input_dims, dropout_rate,
                                                dropout_blocks)

/// Patch discriminator over the 6-channel (condition, candidate) stack.
struct DiscriminatorConfig {
    int base_channels = 8;
    int n_layers = 2;

    [[nodiscard]] int channels(int layer) const noexcept { return base_channels * std::min(1 << layer, 8); }

    void validate() const {
        if (base_channels < 4) fail(ErrorKind::ConfigInvalid, "discriminator base_channels must be >= 4");
        if (n_layers < 1 || n_layers > 4) fail(ErrorKind::ConfigInvalid, "discriminator n_layers must be in [1,4]");
    }
    friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DiscriminatorConfig, base_channels, n_layers)

/// Ordered named weight arrays.
class NetworkParams {
public:
    std::size_t add(std::string name, std::vector<int> shape, std::vector<double> values) {
        if (shape_volume(shape) != values.size()) fail(ErrorKind::ShapeMismatch, "array '" + name + "' size/shape");
        arrays_.push_back({std::move(name), std::move(shape), std::move(values)});
        return arrays_.size() - 1;
    }

    [[nodiscard]] std::size_t size() const noexcept { return arrays_.size(); }
    [[nodiscard]] std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& a : arrays_) n += a.size();
        return n;
    }
    [[nodiscard]] const std::vector<ParamArray>& arrays() const noexcept { return arrays_; }
    [[nodiscard]] std::vector<ParamArray>& arrays() noexcept { return arrays_; }
    [[nodiscard]] std::span<const double> values(std::size_t i) const noexcept { return arrays_[i].values; }
    [[nodiscard]] std::span<double> values(std::size_t i) noexcept { return arrays_[i].values; }

    [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const {
        for (std::size_t i = 0; i < arrays_.size(); ++i) {
            if (arrays_[i].name == name) return i;
        }
        return std::nullopt;
    }

    [[nodiscard]] nlohmann::json shape_manifest() const {
        nlohmann::json m = nlohmann::json::array();
        for (const auto& a : arrays_) m.push_back({{"name", a.name}, {"shape", a.shape}});
        return m;
    }

    [[nodiscard]] bool same_layout(const NetworkParams& other) const {
        if (arrays_.size() != other.arrays_.size()) return false;
        for (std::size_t i = 0; i < arrays_.size(); ++i) {
            if (arrays_[i].name != other.arrays_[i].name || arrays_[i].shape != other.arrays_[i].shape) return false;
        }
        return true;
    }

    [[nodiscard]] NetworkParams zeros_like() const {
        NetworkParams z = *this;
        for (auto& a : z.arrays_) std::fill(a.values.begin(), a.values.end(), 0.0);
        return z;
    }

    void fill(double v) {
        for (auto& a : arrays_) std::fill(a.values.begin(), a.values.end(), v);
    }

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;

private:
    std::vector<ParamArray> arrays_;
};

namespace detail {

[[nodiscard]] inline double normal(Rng& rng, double mean, double stddev) {
    // Box-Muller on the portable uniform source.
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline constexpr double kInitStd = 0.02;

/// Indices of one block's arrays inside a NetworkParams.
struct BlockParams {
    nn::ConvShape shape;
    std::size_t weight = 0;
    std::optional<std::size_t> bias;
    std::optional<std::size_t> gamma;
    std::optional<std::size_t> beta;
    bool dropout = false;
};

/// Appends a block's arrays; values are drawn from `rng` when given, zero otherwise.
/// Conv weights ~ N(0, 0.02), norm scale ~ N(1, 0.02), shifts and biases zero.
inline BlockParams add_block(NetworkParams& params, const std::string& prefix, nn::ConvShape shape, bool transposed,
                             bool with_bias, bool with_norm, Rng* rng) {
    BlockParams b;
    b.shape = shape;
    const std::vector<int> wshape = transposed
                                        ? std::vector<int>{shape.in_channels, shape.out_channels, shape.kernel, shape.kernel}
                                        : std::vector<int>{shape.out_channels, shape.in_channels, shape.kernel, shape.kernel};
    std::vector<double> w(shape_volume(wshape), 0.0);
    if (rng) {
        for (double& v : w) v = normal(*rng, 0.0, kInitStd);
    }
    b.weight = params.add(prefix + ".weight", wshape, std::move(w));
    const auto oc = static_cast<std::size_t>(shape.out_channels);
    if (with_bias) b.bias = params.add(prefix + ".bias", {shape.out_channels}, std::vector<double>(oc, 0.0));
    if (with_norm) {
        std::vector<double> g(oc, rng ? 0.0 : 1.0);
        if (rng) {
            for (double& v : g) v = normal(*rng, 1.0, kInitStd);
        }
        b.gamma = params.add(prefix + ".gamma", {shape.out_channels}, std::move(g));
        b.beta = params.add(prefix + ".beta", {shape.out_channels}, std::vector<double>(oc, 0.0));
    }
    return b;
}

[[nodiscard]] inline std::span<const double> opt_values(const NetworkParams& p, const std::optional<std::size_t>& i) {
    return i ? p.values(*i) : std::span<const double>{};
}
[[nodiscard]] inline std::span<double> opt_values(NetworkParams& p, const std::optional<std::size_t>& i) {
    return i ? p.values(*i) : std::span<double>{};
}

struct GeneratorLayout {
    std::vector<BlockParams> encoder;  // encoder[i] produces stage i
    std::vector<BlockParams> decoder;  // decoder[i] produces the input of stage i-1 (decoder[0] the image)
};

inline GeneratorLayout make_generator_layout(const GeneratorConfig& cfg, NetworkParams& params, Rng* rng) {
    const int depth = cfg.depth;
    GeneratorLayout layout;
    for (int i = 0; i < depth; ++i) {
        const int in = i == 0 ? RasterImage::kChannels : cfg.channels(i - 1);
        const bool norm = i > 0 && i < depth - 1;
        layout.encoder.push_back(add_block(params, "enc" + std::to_string(i), {in, cfg.channels(i), 4, 2, 1},
                                           false, !norm, norm, rng));
    }
    layout.decoder.resize(depth);
    for (int i = depth - 1; i >= 0; --i) {
        const int in = i == depth - 1 ? cfg.channels(depth - 1) : 2 * cfg.channels(i);
        const int out = i == 0 ? RasterImage::kChannels : cfg.channels(i - 1);
        const bool outermost = i == 0;
        auto block = add_block(params, "dec" + std::to_string(i), {in, out, 4, 2, 1}, true, outermost, !outermost, rng);
        block.dropout = !outermost && i >= depth - cfg.dropout_blocks && cfg.dropout_rate > 0.0;
        layout.decoder[i] = block;
    }
    return layout;
}

struct DiscriminatorLayout {
    std::vector<BlockParams> layers;  // last entry is the 1-channel logit conv
};

inline DiscriminatorLayout make_discriminator_layout(const DiscriminatorConfig& cfg, NetworkParams& params, Rng* rng) {
    DiscriminatorLayout layout;
    const int n = cfg.n_layers;
    layout.layers.push_back(add_block(params, "disc0", {2 * RasterImage::kChannels, cfg.channels(0), 4, 2, 1}, false,
                                      true, false, rng));
    for (int i = 1; i <= n; ++i) {
        const int stride = i < n ? 2 : 1;
        layout.layers.push_back(add_block(params, "disc" + std::to_string(i),
                                          {cfg.channels(i - 1), cfg.channels(i), 4, stride, 1}, false, false, true, rng));
    }
    layout.layers.push_back(add_block(params, "logits", {cfg.channels(n), 1, 4, 1, 1}, false, true, false, rng));
    return layout;
}

}  // namespace detail

/// Logit grid size for a patch discriminator with `n_layers` on `input` dims:
/// n_layers stride-2 convolutions (k4, p1) then two stride-1 ones.
[[nodiscard]] inline Dims patch_grid_dims(Dims input, int n_layers) {
    int w = input.width;
    int h = input.height;
    for (int i = 0; i < n_layers + 2; ++i) {
        const int stride = i < n_layers ? 2 : 1;
        if (w + 2 < 4 || h + 2 < 4) return {0, 0};
        w = nn::conv_out_size(w, 4, stride, 1);
        h = nn::conv_out_size(h, 4, stride, 1);
    }
    return {w, h};
}

// ---------------------------------------------------------------------------
// Generator

struct GeneratorCache {
    struct Encoder {
        Tensor input;  // what the conv saw (after activation)
        std::vector<double> cols;
        nn::NormCache norm;
        Tensor output;  // stage output before activation; also the skip tensor
    };
    struct Decoder {
        Tensor concat;      // pre-activation input
        Tensor activated;   // convT input
        nn::NormCache norm;
        std::vector<double> dropout_scale;
        Tensor output;      // tanh output for the outermost block
    };
    std::vector<Encoder> encoder;
    std::vector<Decoder> decoder;
};

class Generator {
public:
    Generator(GeneratorConfig config, NetworkParams params) : config_(config) {
        config_.validate();
        NetworkParams reference;
        layout_ = detail::make_generator_layout(config_, reference, nullptr);
        if (!reference.same_layout(params)) {
            fail(ErrorKind::ShapeMismatch, "generator parameters do not match the configured architecture");
        }
        params_ = std::move(params);
    }

    [[nodiscard]] const GeneratorConfig& config() const noexcept { return config_; }
    [[nodiscard]] const NetworkParams& params() const noexcept { return params_; }
    [[nodiscard]] NetworkParams& params() noexcept { return params_; }

    /// `image` holds [0,1] values; output likewise. Dropout is active only when
    /// `dropout_rng` is supplied.
    [[nodiscard]] Tensor forward(const Tensor& image, GeneratorCache* cache = nullptr, Rng* dropout_rng = nullptr) const {
        if (image.channels != RasterImage::kChannels || image.width != config_.input_dims.width ||
            image.height != config_.input_dims.height) {
            fail(ErrorKind::ShapeMismatch, "generator expects " + std::to_string(config_.input_dims.width) + "x" +
                                               std::to_string(config_.input_dims.height) + " input, got " +
                                               std::to_string(image.width) + "x" + std::to_string(image.height));
        }
        GeneratorCache local;
        GeneratorCache& c = cache ? *cache : local;
        const int depth = config_.depth;
        c.encoder.assign(depth, {});
        c.decoder.assign(depth, {});

        for (int i = 0; i < depth; ++i) {
            const auto& b = layout_.encoder[i];
            auto& e = c.encoder[i];
            e.input = i == 0 ? nn::to_signed(image) : nn::leaky_relu(c.encoder[i - 1].output, nn::kLeakySlope);
            Tensor y = nn::conv2d_forward(e.input, b.shape, params_.values(b.weight),
                                          detail::opt_values(params_, b.bias), e.cols);
            if (b.gamma) {
                y = nn::instance_norm_forward(y, params_.values(*b.gamma), params_.values(*b.beta), e.norm);
            }
            e.output = std::move(y);
        }

        Tensor up;
        for (int i = depth - 1; i >= 0; --i) {
            const auto& b = layout_.decoder[i];
            auto& d = c.decoder[i];
            d.concat = i == depth - 1 ? c.encoder[i].output : nn::concat_channels(c.encoder[i].output, up);
            d.activated = nn::leaky_relu(d.concat, 0.0);
            Tensor y = nn::conv_transpose2d_forward(d.activated, b.shape, params_.values(b.weight),
                                                    detail::opt_values(params_, b.bias));
            if (i == 0) {
                d.output = nn::tanh_forward(y);
                up = d.output;
                break;
            }
            y = nn::instance_norm_forward(y, params_.values(*b.gamma), params_.values(*b.beta), d.norm);
            if (b.dropout && dropout_rng) {
                const double keep = 1.0 - config_.dropout_rate;
                d.dropout_scale.resize(y.size());
                for (std::size_t k = 0; k < y.size(); ++k) {
                    d.dropout_scale[k] = uniform01(*dropout_rng) < keep ? 1.0 / keep : 0.0;
                    y.data[k] *= d.dropout_scale[k];
                }
            }
            up = std::move(y);
        }

        for (double& v : up.data) v = 0.5 * (v + 1.0);
        return up;
    }

    /// Accumulates parameter gradients into `grads` given dL/d(output).
    void backward(const GeneratorCache& c, const Tensor& grad_output, NetworkParams& grads) const {
        const int depth = config_.depth;
        std::vector<Tensor> grad_stage(depth);
        auto add_into = [](Tensor& acc, const Tensor& g) {
            if (acc.data.empty()) {
                acc = g;
                return;
            }
            for (std::size_t k = 0; k < acc.size(); ++k) acc.data[k] += g.data[k];
        };

        Tensor g = grad_output;
        for (double& v : g.data) v *= 0.5;
        for (int i = 0; i < depth; ++i) {
            const auto& b = layout_.decoder[i];
            const auto& d = c.decoder[i];
            if (i == 0) {
                g = nn::tanh_backward(g, d.output);
            } else {
                if (!d.dropout_scale.empty()) {
                    for (std::size_t k = 0; k < g.size(); ++k) g.data[k] *= d.dropout_scale[k];
                }
                g = nn::instance_norm_backward(g, d.norm, params_.values(*b.gamma), grads.values(*b.gamma),
                                               grads.values(*b.beta));
            }
            Tensor g_act = nn::conv_transpose2d_backward(g, d.activated, b.shape, params_.values(b.weight),
                                                         grads.values(b.weight), detail::opt_values(grads, b.bias),
                                                         true);
            Tensor g_cat = nn::leaky_relu_backward(g_act, d.concat, 0.0);
            if (i == depth - 1) {
                add_into(grad_stage[i], g_cat);
            } else {
                auto [g_skip, g_up] = nn::split_channels(g_cat, c.encoder[i].output.channels);
                add_into(grad_stage[i], g_skip);
                g = std::move(g_up);
            }
        }

        for (int i = depth - 1; i >= 0; --i) {
            const auto& b = layout_.encoder[i];
            const auto& e = c.encoder[i];
            Tensor gi = grad_stage[i];
            if (b.gamma) {
                gi = nn::instance_norm_backward(gi, e.norm, params_.values(*b.gamma), grads.values(*b.gamma),
                                                grads.values(*b.beta));
            }
            Tensor g_in = nn::conv2d_backward(gi, e.input, b.shape, params_.values(b.weight), e.cols,
                                              grads.values(b.weight), detail::opt_values(grads, b.bias), i > 0);
            if (i > 0) add_into(grad_stage[i - 1], nn::leaky_relu_backward(g_in, c.encoder[i - 1].output, nn::kLeakySlope));
        }
    }

    friend bool operator==(const Generator& a, const Generator& b) {
        return a.config_ == b.config_ && a.params_ == b.params_;
    }

private:
    GeneratorConfig config_;
    NetworkParams params_;
    detail::GeneratorLayout layout_;
};

[[nodiscard]] inline Generator build_generator(const GeneratorConfig& config, std::uint64_t seed) {
    config.validate();
    NetworkParams params;
    Rng rng(seed);
    detail::make_generator_layout(config, params, &rng);
    return Generator(config, std::move(params));
}

/// Inference-mode forward pass (no dropout).
[[nodiscard]] inline RasterImage generator_forward(const Generator& generator, const RasterImage& image) {
    return to_image(generator.forward(to_tensor(image)));
}

// ---------------------------------------------------------------------------
// Discriminator

struct DiscriminatorCache {
    struct Layer {
        Tensor input;
        std::vector<double> cols;
        nn::NormCache norm;
        Tensor pre_activation;  // after conv (+norm), before leaky ReLU
    };
    std::vector<Layer> layers;
};

class Discriminator {
public:
    Discriminator(DiscriminatorConfig config, Dims input_dims, NetworkParams params)
        : config_(config), input_dims_(input_dims) {
        config_.validate();
        const Dims grid = patch_grid_dims(input_dims_, config_.n_layers);
        if (grid.width < 1 || grid.height < 1) {
            fail(ErrorKind::ConfigInvalid, "input too small for a " + std::to_string(config_.n_layers) +
                                               "-layer patch discriminator");
        }
        NetworkParams reference;
        layout_ = detail::make_discriminator_layout(config_, reference, nullptr);
        if (!reference.same_layout(params)) {
            fail(ErrorKind::ShapeMismatch, "discriminator parameters do not match the configured architecture");
        }
        params_ = std::move(params);
    }

    [[nodiscard]] const DiscriminatorConfig& config() const noexcept { return config_; }
    [[nodiscard]] Dims input_dims() const noexcept { return input_dims_; }
    [[nodiscard]] Dims grid_dims() const noexcept { return patch_grid_dims(input_dims_, config_.n_layers); }
    [[nodiscard]] const NetworkParams& params() const noexcept { return params_; }
    [[nodiscard]] NetworkParams& params() noexcept { return params_; }

    /// Both inputs hold [0,1] values. Returns a 1-channel logit grid.
    [[nodiscard]] Tensor forward(const Tensor& condition, const Tensor& candidate, DiscriminatorCache* cache = nullptr) const {
        for (const Tensor* t : {&condition, &candidate}) {
            if (t->channels != RasterImage::kChannels || t->width != input_dims_.width ||
                t->height != input_dims_.height) {
                fail(ErrorKind::ShapeMismatch, "discriminator input does not match configured dims");
            }
        }
        DiscriminatorCache local;
        DiscriminatorCache& c = cache ? *cache : local;
        c.layers.assign(layout_.layers.size(), {});

        Tensor x = nn::to_signed(nn::concat_channels(condition, candidate));
        for (std::size_t i = 0; i < layout_.layers.size(); ++i) {
            const auto& b = layout_.layers[i];
            auto& l = c.layers[i];
            l.input = std::move(x);
            Tensor y = nn::conv2d_forward(l.input, b.shape, params_.values(b.weight),
                                          detail::opt_values(params_, b.bias), l.cols);
            if (b.gamma) y = nn::instance_norm_forward(y, params_.values(*b.gamma), params_.values(*b.beta), l.norm);
            const bool last = i + 1 == layout_.layers.size();
            if (last) return y;
            l.pre_activation = std::move(y);
            x = nn::leaky_relu(l.pre_activation, nn::kLeakySlope);
        }
        return x;  // unreachable: the layout always ends with the logit conv
    }

    /// Accumulates parameter gradients into `grads` (skipped when null) and
    /// returns dL/d(candidate) when requested.
    Tensor backward(const DiscriminatorCache& c, const Tensor& grad_logits, NetworkParams* grads,
                    bool need_candidate_grad) const {
        Tensor g = grad_logits;
        for (std::size_t idx = layout_.layers.size(); idx-- > 0;) {
            const auto& b = layout_.layers[idx];
            const auto& l = c.layers[idx];
            const bool last = idx + 1 == layout_.layers.size();
            if (!last) g = nn::leaky_relu_backward(g, l.pre_activation, nn::kLeakySlope);
            if (b.gamma) {
                g = nn::instance_norm_backward(g, l.norm, params_.values(*b.gamma),
                                               grads ? grads->values(*b.gamma) : std::span<double>{},
                                               grads ? grads->values(*b.beta) : std::span<double>{});
            }
            const bool need_input = idx > 0 || need_candidate_grad;
            g = nn::conv2d_backward(g, l.input, b.shape, params_.values(b.weight), l.cols,
                                    grads ? grads->values(b.weight) : std::span<double>{},
                                    grads ? detail::opt_values(*grads, b.bias) : std::span<double>{}, need_input);
            if (!need_input) return {};
        }
        // g is the gradient w.r.t. the signed 6-channel stack; keep the candidate half.
        auto [g_condition, g_candidate] = nn::split_channels(g, RasterImage::kChannels);
        for (double& v : g_candidate.data) v *= 2.0;
        return g_candidate;
    }

    friend bool operator==(const Discriminator& a, const Discriminator& b) {
        return a.config_ == b.config_ && a.input_dims_ == b.input_dims_ && a.params_ == b.params_;
    }

private:
    DiscriminatorConfig config_;
    Dims input_dims_;
    NetworkParams params_;
    detail::DiscriminatorLayout layout_;
};

[[nodiscard]] inline Discriminator build_discriminator(const DiscriminatorConfig& config, Dims input_dims,
                                                       std::uint64_t seed) {
    config.validate();
    NetworkParams params;
    Rng rng(seed);
    detail::make_discriminator_layout(config, params, &rng);
    return Discriminator(config, input_dims, std::move(params));
}

[[nodiscard]] inline Tensor discriminator_forward(const Discriminator& d, const RasterImage& condition,
                                                  const RasterImage& candidate) {
    if (!condition.same_dims(candidate)) fail(ErrorKind::ShapeMismatch, "condition and candidate differ in size");
    return d.forward(to_tensor(condition), to_tensor(candidate));
}

// ---------------------------------------------------------------------------
// Serialization

inline void append_params(Archive& archive, const NetworkParams& params, const std::string& prefix) {
    for (const auto& a : params.arrays()) archive.arrays.push_back({prefix + a.name, a.shape, a.values});
}

/// Collects the arrays named `prefix + <name>` in order.
[[nodiscard]] inline NetworkParams extract_params(const Archive& archive, const std::string& prefix) {
    NetworkParams params;
    for (const auto& a : archive.arrays) {
        if (a.name.starts_with(prefix) && a.name.find('/', prefix.size()) == std::string::npos) {
            params.add(a.name.substr(prefix.size()), a.shape, a.values);
        }
    }
    return params;
}

[[nodiscard]] inline Archive to_archive(const Generator& g) {
    Archive a;
    a.meta = {{"kind", "generator"}, {"config", g.config()}};
    append_params(a, g.params(), "");
    return a;
}

[[nodiscard]] inline Generator generator_from_archive(const Archive& a) {
    if (a.meta.value("kind", "") != "generator") fail(ErrorKind::DecodeFailure, "archive does not hold a generator");
    return Generator(a.meta.at("config").get<GeneratorConfig>(), extract_params(a, ""));
}

[[nodiscard]] inline Archive to_archive(const Discriminator& d) {
    Archive a;
    a.meta = {{"kind", "discriminator"}, {"config", d.config()}, {"input_dims", d.input_dims()}};
    append_params(a, d.params(), "");
    return a;
}

[[nodiscard]] inline Discriminator discriminator_from_archive(const Archive& a) {
    if (a.meta.value("kind", "") != "discriminator") {
        fail(ErrorKind::DecodeFailure, "archive does not hold a discriminator");
    }
    return Discriminator(a.meta.at("config").get<DiscriminatorConfig>(), a.meta.at("input_dims").get<Dims>(),
                         extract_params(a, ""));
}

}  // namespace derain
