#pragma once

#include <cstdint>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "derain/corruption.hpp"
#include "derain/data.hpp"
#include "derain/evaluation.hpp"
#include "derain/networks.hpp"
#include "derain/training.hpp"
#include "derain/util.hpp"

namespace derain {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthParams, dims, density, cars_min, cars_max, background, glyph_scale,
                                                texture, droplets)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SplitCounts, train, validation, test)

inline void to_json(nlohmann::json& j, const DetectorSpec& s) { j = s.to_json(); }
inline void from_json(const nlohmann::json& j, DetectorSpec& s) { s = detector_spec_from_json(j); }

/// Everything a run needs, in one serializable object. `seed` is the root of
/// every random stream; it overrides `train.seed` when the config is resolved.
struct RunConfig {
    std::uint64_t seed = 42;
    SynthParams synth;
    SplitCounts split{200, 20, 40};
    TrainConfig train;
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    DetectorSpec detector;

    /// Copies shared fields (seed, dims) into the nested configs and validates.
    void resolve() {
        train.seed = seed;
        generator.input_dims = synth.dims;
        if (detector.kind == "oracle" && detector.parameters.is_object() && !detector.parameters.contains("glyph_scale")) {
            detector.parameters["glyph_scale"] = synth.glyph_scale;
        }
        train.validate();
        generator.validate();
        discriminator.validate();
        if (!(synth.density >= 0.0)) fail(ErrorKind::ConfigInvalid, "density must be >= 0");
        if (synth.cars_min < 0 || synth.cars_max < synth.cars_min) {
            fail(ErrorKind::ConfigInvalid, "car count range must satisfy 0 <= cars_min <= cars_max");
        }
        if (synth.glyph_scale < 1) fail(ErrorKind::ConfigInvalid, "glyph_scale must be >= 1");
        if (detector.kind == "oracle") {
            (void)make_detector(detector);
        } else if (detector.kind != "external") {
            fail(ErrorKind::ConfigInvalid, "unknown detector kind '" + detector.kind + "'");
        }
    }

    [[nodiscard]] std::string fingerprint() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, seed, synth, split, train, generator, discriminator, detector)

/// Covers data, model and training settings. The detector is left out so one
/// trained model can be scored under several detectors; reports carry the
/// detector's own fingerprint next to this one.
inline std::string RunConfig::fingerprint() const {
    nlohmann::json j = *this;
    j.erase("detector");
    return hex64(fnv1a64(j.dump()));
}

inline constexpr std::uint64_t kSplitStream = 0x73706c;  // "spl"

/// Train/validation/test split for a run: the configured counts, scaled down
/// proportionally when the source holds fewer pairs.
[[nodiscard]] inline DatasetSplit split_for_run(const RunConfig& cfg, std::vector<AlignedPair> pairs) {
    const SplitCounts counts = proportional_counts(pairs.size(), cfg.split);
    return split_dataset(std::move(pairs), counts, derive_seed(cfg.seed, kSplitStream));
}

namespace detail {

inline void hash_image(std::string& buf, const RasterImage& img) {
    buf += std::to_string(img.width()) + "x" + std::to_string(img.height()) + ":";
    for (const double v : img.values()) buf.push_back(static_cast<char>(std::lround(v * 255.0)));
}

}  // namespace detail

/// Content hash of a pair set: ids plus 8-bit pixels, in id order. Stable
/// across a PNG round trip.
[[nodiscard]] inline std::string pair_set_fingerprint(const std::vector<AlignedPair>& pairs) {
    std::vector<const AlignedPair*> sorted;
    for (const auto& p : pairs) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->id() < b->id(); });
    std::string buf;
    for (const auto* p : sorted) {
        buf += p->id() + "|";
        detail::hash_image(buf, p->distorted());
        detail::hash_image(buf, p->clear());
    }
    return hex64(fnv1a64(buf));
}

/// Content hash of a set of named images, in name order.
[[nodiscard]] inline std::string image_set_fingerprint(std::vector<std::pair<std::string, const RasterImage*>> images) {
    std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string buf;
    for (const auto& [id, img] : images) {
        buf += id + "|";
        detail::hash_image(buf, *img);
    }
    return hex64(fnv1a64(buf));
}

}  // namespace derain
