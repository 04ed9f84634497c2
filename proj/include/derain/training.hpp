#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "derain/archive.hpp"
#include "derain/data.hpp"
#include "derain/error.hpp"
#include "derain/networks.hpp"
#include "derain/tensor.hpp"
#include "derain/util.hpp"

namespace derain {

struct TrainConfig {
    int epochs = 34;
    int batch_size = 1;
    double learning_rate = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double l1_weight = 100.0;
    std::uint64_t seed = 0;
    /// When false, validation runs across threads. Results stay identical
    /// because the reduction is still folded in pair order.
    bool deterministic = true;
    int patience = 3;

    void validate() const {
        if (epochs < 1) fail(ErrorKind::ConfigInvalid, "epochs must be >= 1");
        if (batch_size < 1) fail(ErrorKind::ConfigInvalid, "batch_size must be >= 1");
        if (!(learning_rate > 0.0)) fail(ErrorKind::ConfigInvalid, "learning_rate must be > 0");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail(ErrorKind::ConfigInvalid, "adam_beta1 must be in [0,1)");
        if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail(ErrorKind::ConfigInvalid, "adam_beta2 must be in [0,1)");
        if (!(l1_weight >= 0.0)) fail(ErrorKind::ConfigInvalid, "l1_weight must be >= 0");
        if (patience < 1) fail(ErrorKind::ConfigInvalid, "patience must be >= 1");
    }
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, epochs, batch_size, learning_rate, adam_beta1, adam_beta2,
                                                l1_weight, seed, deterministic, patience)

// ---------------------------------------------------------------------------
// Losses

/// log(1 + e^x) without overflow for large |x|.
[[nodiscard]] inline double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

[[nodiscard]] inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct DiscriminatorLossResult {
    double loss = 0.0;
    Tensor grad_real;
    Tensor grad_fake;
};

/// Binary cross-entropy with real -> 1 and fake -> 0, averaged over patches
/// and over the two terms.
[[nodiscard]] inline DiscriminatorLossResult discriminator_loss_with_grad(const Tensor& real_logits,
                                                                         const Tensor& fake_logits) {
    if (!real_logits.same_shape(fake_logits)) fail(ErrorKind::ShapeMismatch, "logit grids differ in shape");
    const double n = static_cast<double>(real_logits.size());
    DiscriminatorLossResult r{0.0, Tensor(real_logits.channels, real_logits.height, real_logits.width),
                              Tensor(fake_logits.channels, fake_logits.height, fake_logits.width)};
    double sum = 0.0;
    for (std::size_t i = 0; i < real_logits.size(); ++i) {
        const double a = real_logits.data[i];
        const double b = fake_logits.data[i];
        sum += softplus(-a) + softplus(b);
        r.grad_real.data[i] = -0.5 * sigmoid(-a) / n;
        r.grad_fake.data[i] = 0.5 * sigmoid(b) / n;
    }
    r.loss = 0.5 * sum / n;
    return r;
}

[[nodiscard]] inline double discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits) {
    return discriminator_loss_with_grad(real_logits, fake_logits).loss;
}

struct GeneratorLoss {
    double total = 0.0;
    double adversarial = 0.0;
    double l1 = 0.0;
};

struct GeneratorLossResult {
    GeneratorLoss loss;
    Tensor grad_logits;
    Tensor grad_predicted;
};

/// Non-saturating adversarial term (fakes pushed towards "real") plus a
/// weighted mean absolute reconstruction error.
[[nodiscard]] inline GeneratorLossResult generator_loss_with_grad(const Tensor& fake_logits, const Tensor& predicted,
                                                                 const Tensor& target, double l1_weight) {
    if (!predicted.same_shape(target)) fail(ErrorKind::ShapeMismatch, "predicted and target differ in shape");
    GeneratorLossResult r{{}, Tensor(fake_logits.channels, fake_logits.height, fake_logits.width),
                          Tensor(predicted.channels, predicted.height, predicted.width)};
    const double n_logits = static_cast<double>(fake_logits.size());
    double adv = 0.0;
    for (std::size_t i = 0; i < fake_logits.size(); ++i) {
        adv += softplus(-fake_logits.data[i]);
        r.grad_logits.data[i] = -sigmoid(-fake_logits.data[i]) / n_logits;
    }
    const double n_pixels = static_cast<double>(predicted.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted.data[i] - target.data[i];
        l1 += std::abs(d);
        r.grad_predicted.data[i] = l1_weight * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n_pixels;
    }
    r.loss.adversarial = adv / n_logits;
    r.loss.l1 = l1 / n_pixels;
    r.loss.total = l1_weight == 0.0 ? r.loss.adversarial : r.loss.adversarial + l1_weight * r.loss.l1;
    return r;
}

[[nodiscard]] inline GeneratorLoss generator_loss(const Tensor& fake_logits, const RasterImage& predicted,
                                                  const RasterImage& target, double l1_weight) {
    if (!predicted.same_dims(target)) fail(ErrorKind::ShapeMismatch, "predicted and target differ in size");
    return generator_loss_with_grad(fake_logits, to_tensor(predicted), to_tensor(target), l1_weight).loss;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
    NetworkParams first_moment;
    NetworkParams second_moment;
    std::int64_t steps = 0;

    static AdamState for_params(const NetworkParams& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline constexpr double kAdamEpsilon = 1e-8;

inline void adam_update(NetworkParams& params, const NetworkParams& grads, AdamState& state, double lr, double beta1,
                        double beta2) {
    ++state.steps;
    const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(state.steps));
    const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(state.steps));
    for (std::size_t a = 0; a < params.size(); ++a) {
        auto p = params.values(a);
        const auto g = grads.values(a);
        auto m = state.first_moment.values(a);
        auto v = state.second_moment.values(a);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / correction1) / (std::sqrt(v[i] / correction2) + kAdamEpsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint

struct EpochMetrics {
    int epoch = 0;
    double discriminator_loss = 0.0;
    double generator_adversarial = 0.0;
    double l1_train = 0.0;
    /// Absent when the split has no validation pairs.
    std::optional<double> l1_validation;
    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

[[nodiscard]] inline nlohmann::json to_json(const EpochMetrics& m) {
    nlohmann::json j = {{"epoch", m.epoch},
                        {"discriminator_loss", m.discriminator_loss},
                        {"generator_adversarial", m.generator_adversarial},
                        {"l1_train", m.l1_train}};
    j["l1_validation"] = m.l1_validation ? nlohmann::json(*m.l1_validation) : nlohmann::json(nullptr);
    return j;
}

[[nodiscard]] inline EpochMetrics epoch_metrics_from_json(const nlohmann::json& j) {
    EpochMetrics m;
    m.epoch = j.at("epoch").get<int>();
    m.discriminator_loss = j.at("discriminator_loss").get<double>();
    m.generator_adversarial = j.at("generator_adversarial").get<double>();
    m.l1_train = j.at("l1_train").get<double>();
    if (!j.at("l1_validation").is_null()) m.l1_validation = j.at("l1_validation").get<double>();
    return m;
}

/// Complete resumable training state.
struct Checkpoint {
    TrainConfig train;
    Generator generator;
    Discriminator discriminator;
    AdamState generator_adam;
    AdamState discriminator_adam;
    Rng rng;
    int epochs_completed = 0;
    std::int64_t steps = 0;
    std::vector<EpochMetrics> history;
    std::string config_fingerprint;
    std::string data_fingerprint;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint64_t kGeneratorInitStream = 0x67656e;   // "gen"
inline constexpr std::uint64_t kDiscriminatorInitStream = 0x646973; // "dis"
inline constexpr std::uint64_t kDropoutStream = 0x64726f;           // "dro"
inline constexpr std::uint64_t kShuffleStream = 0x736875;           // "shu"

[[nodiscard]] inline Checkpoint initial_checkpoint(const TrainConfig& train, const GeneratorConfig& gen,
                                                   const DiscriminatorConfig& disc) {
    train.validate();
    Generator g = build_generator(gen, derive_seed(train.seed, kGeneratorInitStream));
    Discriminator d = build_discriminator(disc, gen.input_dims, derive_seed(train.seed, kDiscriminatorInitStream));
    AdamState ga = AdamState::for_params(g.params());
    AdamState da = AdamState::for_params(d.params());
    return Checkpoint{train,         std::move(g), std::move(d), std::move(ga), std::move(da),
                      Rng(derive_seed(train.seed, kDropoutStream)), 0, 0, {}, {}, {}};
}

[[nodiscard]] inline Archive to_archive(const Checkpoint& c) {
    std::ostringstream rng_state;
    rng_state << c.rng;
    nlohmann::json history = nlohmann::json::array();
    for (const auto& m : c.history) history.push_back(to_json(m));

    Archive a;
    a.meta = {{"kind", "checkpoint"},
              {"train", c.train},
              {"generator", c.generator.config()},
              {"discriminator", c.discriminator.config()},
              {"epochs_completed", c.epochs_completed},
              {"steps", c.steps},
              {"generator_adam_steps", c.generator_adam.steps},
              {"discriminator_adam_steps", c.discriminator_adam.steps},
              {"rng", rng_state.str()},
              {"history", history},
              {"config_fingerprint", c.config_fingerprint},
              {"data_fingerprint", c.data_fingerprint}};
    append_params(a, c.generator.params(), "G/");
    append_params(a, c.discriminator.params(), "D/");
    append_params(a, c.generator_adam.first_moment, "G.m/");
    append_params(a, c.generator_adam.second_moment, "G.v/");
    append_params(a, c.discriminator_adam.first_moment, "D.m/");
    append_params(a, c.discriminator_adam.second_moment, "D.v/");
    return a;
}

[[nodiscard]] inline Checkpoint checkpoint_from_archive(const Archive& a) {
    if (a.meta.value("kind", "") != "checkpoint") fail(ErrorKind::DecodeFailure, "archive does not hold a checkpoint");
    try {
        const auto& meta = a.meta;
        const auto gen_cfg = meta.at("generator").get<GeneratorConfig>();
        Generator g(gen_cfg, extract_params(a, "G/"));
        Discriminator d(meta.at("discriminator").get<DiscriminatorConfig>(), gen_cfg.input_dims, extract_params(a, "D/"));
        AdamState ga{extract_params(a, "G.m/"), extract_params(a, "G.v/"), meta.at("generator_adam_steps").get<std::int64_t>()};
        AdamState da{extract_params(a, "D.m/"), extract_params(a, "D.v/"),
                     meta.at("discriminator_adam_steps").get<std::int64_t>()};
        if (!ga.first_moment.same_layout(g.params()) || !ga.second_moment.same_layout(g.params()) ||
            !da.first_moment.same_layout(d.params()) || !da.second_moment.same_layout(d.params())) {
            fail(ErrorKind::DecodeFailure, "optimizer buffers do not match network parameters");
        }
        Rng rng;
        std::istringstream rng_state(meta.at("rng").get<std::string>());
        rng_state >> rng;
        if (!rng_state) fail(ErrorKind::DecodeFailure, "bad rng state");
        std::vector<EpochMetrics> history;
        for (const auto& m : meta.at("history")) history.push_back(epoch_metrics_from_json(m));
        return Checkpoint{meta.at("train").get<TrainConfig>(),
                          std::move(g),
                          std::move(d),
                          std::move(ga),
                          std::move(da),
                          rng,
                          meta.at("epochs_completed").get<int>(),
                          meta.at("steps").get<std::int64_t>(),
                          std::move(history),
                          meta.at("config_fingerprint").get<std::string>(),
                          meta.at("data_fingerprint").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::DecodeFailure, std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_archive(path, to_archive(c)); }

[[nodiscard]] inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_archive(read_archive(path));
}

// ---------------------------------------------------------------------------
// Training step

struct StepMetrics {
    double discriminator_loss = 0.0;
    double generator_adversarial = 0.0;
    double l1 = 0.0;
    double generator_total = 0.0;
};

namespace detail {

inline void check_finite(double v, const char* what, std::int64_t step) {
    if (!std::isfinite(v)) {
        fail(ErrorKind::NonFiniteLoss, std::string(what) + " is " + std::to_string(v) + " at step " + std::to_string(step));
    }
}

inline void scale_params(NetworkParams& p, double s) {
    for (auto& a : p.arrays()) {
        for (double& v : a.values) v *= s;
    }
}

}  // namespace detail

/// One discriminator update on (distorted, clear) vs (distorted, generated)
/// followed by one generator update, averaged over the pairs in `batch`.
inline StepMetrics train_step(Checkpoint& state, std::span<const AlignedPair* const> batch) {
    if (batch.empty()) fail(ErrorKind::InvalidArgument, "empty batch");
    const Dims dims = state.generator.config().input_dims;
    for (const auto* p : batch) {
        if (p->width() != dims.width || p->height() != dims.height) {
            fail(ErrorKind::ShapeMismatch, "pair '" + p->id() + "' is " + std::to_string(p->width()) + "x" +
                                               std::to_string(p->height()) + ", generator expects " +
                                               std::to_string(dims.width) + "x" + std::to_string(dims.height));
        }
    }
    const TrainConfig& cfg = state.train;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    struct Sample {
        Tensor input;
        Tensor target;
        Tensor fake;
        GeneratorCache cache;
    };
    std::vector<Sample> samples(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        auto& s = samples[b];
        s.input = to_tensor(batch[b]->distorted());
        s.target = to_tensor(batch[b]->clear());
        s.fake = state.generator.forward(s.input, &s.cache, &state.rng);
    }

    StepMetrics metrics;

    // Discriminator update; fakes are treated as constants here.
    NetworkParams d_grads = state.discriminator.params().zeros_like();
    for (auto& s : samples) {
        DiscriminatorCache real_cache, fake_cache;
        const Tensor real_logits = state.discriminator.forward(s.input, s.target, &real_cache);
        const Tensor fake_logits = state.discriminator.forward(s.input, s.fake, &fake_cache);
        auto loss = discriminator_loss_with_grad(real_logits, fake_logits);
        detail::check_finite(loss.loss, "discriminator loss", state.steps);
        metrics.discriminator_loss += loss.loss * inv_batch;
        state.discriminator.backward(real_cache, loss.grad_real, &d_grads, false);
        state.discriminator.backward(fake_cache, loss.grad_fake, &d_grads, false);
    }
    detail::scale_params(d_grads, inv_batch);
    adam_update(state.discriminator.params(), d_grads, state.discriminator_adam, cfg.learning_rate, cfg.adam_beta1,
                cfg.adam_beta2);

    // Generator update against the freshly updated discriminator.
    NetworkParams g_grads = state.generator.params().zeros_like();
    for (auto& s : samples) {
        DiscriminatorCache cache;
        const Tensor logits = state.discriminator.forward(s.input, s.fake, &cache);
        auto loss = generator_loss_with_grad(logits, s.fake, s.target, cfg.l1_weight);
        detail::check_finite(loss.loss.total, "generator loss", state.steps);
        metrics.generator_adversarial += loss.loss.adversarial * inv_batch;
        metrics.l1 += loss.loss.l1 * inv_batch;
        metrics.generator_total += loss.loss.total * inv_batch;
        Tensor grad = state.discriminator.backward(cache, loss.grad_logits, nullptr, true);
        for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] += loss.grad_predicted.data[i];
        state.generator.backward(s.cache, grad, g_grads);
    }
    detail::scale_params(g_grads, inv_batch);
    adam_update(state.generator.params(), g_grads, state.generator_adam, cfg.learning_rate, cfg.adam_beta1,
                cfg.adam_beta2);

    ++state.steps;
    return metrics;
}

inline StepMetrics train_step(Checkpoint& state, const AlignedPair& pair) {
    const AlignedPair* one[] = {&pair};
    return train_step(state, std::span<const AlignedPair* const>(one));
}

// ---------------------------------------------------------------------------
// Epoch loop

/// Mean L1 between inference-mode predictions and clear images.
[[nodiscard]] inline double mean_l1(const Generator& g, std::span<const AlignedPair> pairs, bool parallel = false) {
    std::vector<double> per_pair(pairs.size());
    auto eval = [&](std::size_t i) {
        const Tensor pred = g.forward(to_tensor(pairs[i].distorted()));
        const Tensor target = to_tensor(pairs[i].clear());
        double sum = 0.0;
        for (std::size_t k = 0; k < pred.size(); ++k) sum += std::abs(pred.data[k] - target.data[k]);
        per_pair[i] = sum / static_cast<double>(pred.size());
    };
    if (parallel) {
        std::vector<std::future<void>> jobs;
        for (std::size_t i = 0; i < pairs.size(); ++i) jobs.push_back(std::async(std::launch::async, eval, i));
        for (auto& j : jobs) j.get();
    } else {
        for (std::size_t i = 0; i < pairs.size(); ++i) eval(i);
    }
    double total = 0.0;
    for (const double v : per_pair) total += v;
    return pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size());
}

struct StepEvent {
    int epoch = 0;
    std::size_t step_in_epoch = 0;
    std::size_t steps_per_epoch = 0;
    StepMetrics metrics;
};

struct TrainCallbacks {
    std::function<void(const StepEvent&)> on_step;
    std::function<void(const Checkpoint&, const EpochMetrics&)> on_epoch;
};

struct TrainOptions {
    /// Per-epoch checkpoints and metrics.jsonl go here when set.
    std::optional<std::filesystem::path> output_dir;
    TrainCallbacks callbacks;
};

[[nodiscard]] inline std::string checkpoint_filename(int epoch) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%03d.drn", epoch);
    return buf;
}

[[nodiscard]] inline nlohmann::json metrics_header(const TrainConfig& cfg, const GeneratorConfig& gen,
                                                   const DiscriminatorConfig& disc) {
    return {{"kind", "header"},
            {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"learning_rate", cfg.learning_rate},
            {"adam_beta1", cfg.adam_beta1},
            {"l1_weight", cfg.l1_weight},
            {"generator", gen},
            {"discriminator", disc}};
}

inline void write_metrics_jsonl(const std::filesystem::path& path, const Checkpoint& c) {
    std::string text = metrics_header(c.train, c.generator.config(), c.discriminator.config()).dump() + "\n";
    for (const auto& m : c.history) {
        auto j = to_json(m);
        j["kind"] = "epoch";
        text += j.dump() + "\n";
    }
    write_text_file(path, text);
}

/// Runs epochs `state.epochs_completed` .. `state.train.epochs - 1`. Each epoch
/// visits the training pairs in an order shuffled by (seed, epoch).
inline Checkpoint train(Checkpoint state, const DatasetSplit& split, const TrainOptions& options = {}) {
    if (split.train.empty()) fail(ErrorKind::InvalidArgument, "training split is empty");
    const TrainConfig cfg = state.train;
    cfg.validate();
    if (options.output_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*options.output_dir, ec);
        if (ec) fail(ErrorKind::IoFailure, "cannot create " + options.output_dir->string());
    }

    const std::size_t n = split.train.size();
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;

    for (int epoch = state.epochs_completed; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
        shuffle_in_place(order, shuffle_rng);

        EpochMetrics em;
        em.epoch = epoch;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<const AlignedPair*> members;
            for (std::size_t k = s * batch; k < std::min(n, (s + 1) * batch); ++k) members.push_back(&split.train[order[k]]);
            const StepMetrics m = train_step(state, members);
            em.discriminator_loss += m.discriminator_loss;
            em.generator_adversarial += m.generator_adversarial;
            em.l1_train += m.l1;
            if (options.callbacks.on_step) options.callbacks.on_step({epoch, s, steps_per_epoch, m});
        }
        em.discriminator_loss /= static_cast<double>(steps_per_epoch);
        em.generator_adversarial /= static_cast<double>(steps_per_epoch);
        em.l1_train /= static_cast<double>(steps_per_epoch);
        if (!split.validation.empty()) em.l1_validation = mean_l1(state.generator, split.validation, !cfg.deterministic);

        state.history.push_back(em);
        state.epochs_completed = epoch + 1;
        if (options.output_dir) {
            save_checkpoint(*options.output_dir / checkpoint_filename(epoch + 1), state);
            write_metrics_jsonl(*options.output_dir / "metrics.jsonl", state);
        }
        if (options.callbacks.on_epoch) options.callbacks.on_epoch(state, em);
    }
    return state;
}

// ---------------------------------------------------------------------------
// Overfit monitoring

struct OverfitReport {
    std::size_t best_epoch = 0;
    /// First epoch at which validation L1 has risen for `patience` consecutive
    /// epochs while training L1 fell over the same epochs.
    std::optional<std::size_t> onset;
};

[[nodiscard]] inline OverfitReport detect_overfit(std::span<const EpochMetrics> history, int patience) {
    if (history.empty()) fail(ErrorKind::InvalidArgument, "empty metric history");
    if (patience < 1) fail(ErrorKind::InvalidArgument, "patience must be >= 1");
    auto val = [&](std::size_t i) { return history[i].l1_validation.value_or(history[i].l1_train); };

    OverfitReport report;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (val(i) < val(report.best_epoch)) report.best_epoch = i;
    }
    const auto p = static_cast<std::size_t>(patience);
    for (std::size_t i = p; i < history.size() && !report.onset; ++i) {
        bool rising = true;
        for (std::size_t j = i - p + 1; j <= i; ++j) {
            rising = rising && val(j) > val(j - 1) && history[j].l1_train < history[j - 1].l1_train;
        }
        if (rising) report.onset = i;
    }
    return report;
}

}  // namespace derain
