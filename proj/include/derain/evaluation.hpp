#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "derain/car_glyph.hpp"
#include "derain/data.hpp"
#include "derain/error.hpp"
#include "derain/image.hpp"
#include "derain/networks.hpp"
#include "derain/util.hpp"

namespace derain {

struct Detection {
    Box box;
    std::string label;
    double confidence = 0.0;

    void validate(int width, int height) const {
        if (!box.inside(width, height)) fail(ErrorKind::InvalidArgument, "detection box outside image bounds");
        if (!(confidence >= 0.0 && confidence <= 1.0)) fail(ErrorKind::InvalidArgument, "confidence outside [0,1]");
    }
    friend bool operator==(const Detection&, const Detection&) = default;
};

inline constexpr double kOracleThreshold = 0.1;
inline constexpr int kOracleGlyphScale = 2;

/// `kind` is "oracle" or "external"; everything else lives in `parameters`.
///   oracle:   threshold (mean abs texel error), glyph_scale (defaults to the
///             SynthParams default glyph size)
///   external: command (required)
struct DetectorSpec {
    std::string kind = "oracle";
    nlohmann::json parameters = {{"threshold", kOracleThreshold}};

    [[nodiscard]] nlohmann::json to_json() const { return {{"kind", kind}, {"parameters", parameters}}; }
    [[nodiscard]] std::string fingerprint() const { return hex64(fnv1a64(to_json().dump())); }
    friend bool operator==(const DetectorSpec&, const DetectorSpec&) = default;
};

[[nodiscard]] inline DetectorSpec detector_spec_from_json(const nlohmann::json& j) {
    DetectorSpec s;
    s.kind = j.value("kind", std::string("oracle"));
    s.parameters = j.value("parameters", nlohmann::json::object());
    return s;
}

// ---------------------------------------------------------------------------
// Detectors

class Detector {
public:
    virtual ~Detector() = default;
    [[nodiscard]] virtual std::vector<Detection> detect(const RasterImage& image) const = 0;
};

/// Exhaustive template matching against the car glyph. A window scores the
/// mean absolute difference between the image and the glyph over the glyph's
/// opaque texels; windows under the threshold are kept, best first, and any
/// window intersecting an already kept one is dropped.
class OracleDetector final : public Detector {
public:
    explicit OracleDetector(double threshold = kOracleThreshold, int glyph_scale = 1)
        : threshold_(threshold), glyph_(glyph_scale) {
        if (!(threshold > 0.0)) fail(ErrorKind::ConfigInvalid, "oracle threshold must be > 0");
    }

    [[nodiscard]] double threshold() const noexcept { return threshold_; }

    /// Mean absolute texel error of the glyph placed with its top-left at (x, y).
    [[nodiscard]] double window_score(const RasterImage& image, int x, int y) const {
        double sum = 0.0;
        for (const auto& t : glyph_.texels()) {
            for (int c = 0; c < 3; ++c) sum += std::abs(image.at(c, y + t.dy, x + t.dx) - t.color[c]);
        }
        return sum / (3.0 * static_cast<double>(glyph_.texels().size()));
    }

    [[nodiscard]] std::vector<Detection> detect(const RasterImage& image) const override {
        const int gw = glyph_.width();
        const int gh = glyph_.height();
        struct Candidate {
            double score;
            int x;
            int y;
        };
        std::vector<Candidate> candidates;
        for (int y = 0; y + gh <= image.height(); ++y) {
            for (int x = 0; x + gw <= image.width(); ++x) {
                const double s = window_score(image, x, y);
                if (s < threshold_) candidates.push_back({s, x, y});
            }
        }
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            return std::tie(a.score, a.y, a.x) < std::tie(b.score, b.y, b.x);
        });
        std::vector<Detection> kept;
        for (const auto& c : candidates) {
            const Box box{c.x, c.y, gw, gh};
            const bool clash =
                std::any_of(kept.begin(), kept.end(), [&](const Detection& d) { return d.box.intersects(box); });
            if (!clash) kept.push_back({box, "car", std::clamp(1.0 - c.score / threshold_, 0.0, 1.0)});
        }
        std::sort(kept.begin(), kept.end(), [](const Detection& a, const Detection& b) {
            return std::tie(a.box.y, a.box.x) < std::tie(b.box.y, b.box.x);
        });
        return kept;
    }

private:
    double threshold_;
    CarGlyph glyph_;
};

/// Parses the external detector's stdout protocol.
[[nodiscard]] inline std::vector<Detection> parse_detections(const std::string& text, int width, int height) {
    std::vector<Detection> out;
    try {
        const auto j = nlohmann::json::parse(text);
        for (const auto& d : j.at("detections")) {
            const auto box = d.at("box").get<std::array<int, 4>>();
            Detection det{{box[0], box[1], box[2], box[3]}, d.at("label").get<std::string>(),
                          d.value("confidence", 1.0)};
            det.validate(width, height);
            out.push_back(std::move(det));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::DecodeFailure, std::string("detector output: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorKind::DecodeFailure, std::string("detector output: ") + e.what());
    }
    return out;
}

/// Runs `<command> <png path>` and reads detections from its stdout.
class ExternalDetector final : public Detector {
public:
    explicit ExternalDetector(std::string command) : command_(std::move(command)) {
        if (command_.empty()) fail(ErrorKind::DetectorUnavailable, "external detector command is empty");
    }

    [[nodiscard]] std::vector<Detection> detect(const RasterImage& image) const override {
        const auto dir = std::filesystem::temp_directory_path();
        const auto path =
            dir / ("derain_detect_" + hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(image.values().data()),
                                                                     image.values().size_bytes()))) + ".png");
        write_png(path, image);
        const std::string cmd = command_ + " '" + path.string() + "'";
        std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
        if (!pipe) {
            std::filesystem::remove(path);
            fail(ErrorKind::DetectorUnavailable, "cannot launch detector: " + command_);
        }
        std::string output;
        char buf[4096];
        while (const std::size_t n = std::fread(buf, 1, sizeof(buf), pipe.get())) output.append(buf, n);
        const int status = pclose(pipe.release());
        std::filesystem::remove(path);
        if (status != 0) {
            fail(ErrorKind::DetectorUnavailable, "detector exited with status " + std::to_string(status) + ": " + command_);
        }
        return parse_detections(output, image.width(), image.height());
    }

private:
    std::string command_;
};

[[nodiscard]] inline std::unique_ptr<Detector> make_detector(const DetectorSpec& spec) {
    const auto& p = spec.parameters;
    if (spec.kind == "oracle") {
        return std::make_unique<OracleDetector>(p.value("threshold", kOracleThreshold), p.value("glyph_scale", kOracleGlyphScale));
    }
    if (spec.kind == "external") {
        const std::string command = p.value("command", std::string());
        if (command.empty()) fail(ErrorKind::DetectorUnavailable, "external detector has no command configured");
        return std::make_unique<ExternalDetector>(command);
    }
    fail(ErrorKind::ConfigInvalid, "unknown detector kind '" + spec.kind + "'");
}

[[nodiscard]] inline std::vector<Detection> detect(const DetectorSpec& spec, const RasterImage& image) {
    return make_detector(spec)->detect(image);
}

// ---------------------------------------------------------------------------
// Scores

struct TrioCounts {
    std::string id;
    int n_c = 0;
    int n_d = 0;
    int n_p = 0;
    friend bool operator==(const TrioCounts&, const TrioCounts&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrioCounts, id, n_c, n_d, n_p)

[[nodiscard]] inline std::size_t count_label(const std::vector<Detection>& ds, std::string_view label) {
    return static_cast<std::size_t>(std::count_if(ds.begin(), ds.end(), [&](const Detection& d) { return d.label == label; }));
}

[[nodiscard]] inline TrioCounts count_trio(const Detector& detector, const EvaluationTrio& trio) {
    auto n = [&](const RasterImage& img) { return static_cast<int>(count_label(detector.detect(img), "car")); };
    return {trio.id(), n(trio.ground_truth()), n(trio.input()), n(trio.predicted())};
}

[[nodiscard]] inline TrioCounts count_trio(const DetectorSpec& spec, const EvaluationTrio& trio) {
    return count_trio(*make_detector(spec), trio);
}

struct RestorationScores {
    double term1 = 0.0;
    double term2 = 0.0;
    std::size_t m_effective = 0;
    std::size_t skipped = 0;
    friend bool operator==(const RestorationScores&, const RestorationScores&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RestorationScores, term1, term2, m_effective, skipped)

/// term1 = mean n_d/n_c and term2 = mean n_p/n_c over trios with n_c > 0.
/// The sum is folded in (id, counts) order so any permutation of the input
/// gives bit-identical results.
[[nodiscard]] inline RestorationScores restoration_scores(std::vector<TrioCounts> counts) {
    if (counts.empty()) fail(ErrorKind::InvalidArgument, "no trio counts to score");
    for (const auto& c : counts) {
        if (c.n_c < 0 || c.n_d < 0 || c.n_p < 0) fail(ErrorKind::InvalidArgument, "negative count in trio " + c.id);
    }
    std::sort(counts.begin(), counts.end(), [](const TrioCounts& a, const TrioCounts& b) {
        return std::tie(a.id, a.n_c, a.n_d, a.n_p) < std::tie(b.id, b.n_c, b.n_d, b.n_p);
    });
    RestorationScores s;
    double sum1 = 0.0;
    double sum2 = 0.0;
    for (const auto& c : counts) {
        if (c.n_c == 0) {
            ++s.skipped;
            continue;
        }
        sum1 += static_cast<double>(c.n_d) / c.n_c;
        sum2 += static_cast<double>(c.n_p) / c.n_c;
        ++s.m_effective;
    }
    if (s.m_effective == 0) fail(ErrorKind::AllTriosSkipped, "every trio has zero cars in its clear image");
    s.term1 = sum1 / static_cast<double>(s.m_effective);
    s.term2 = sum2 / static_cast<double>(s.m_effective);
    return s;
}

// ---------------------------------------------------------------------------
// End-to-end evaluation

struct TrioRow {
    TrioCounts counts;
    double l1_input = 0.0;
    double l1_predicted = 0.0;
    friend bool operator==(const TrioRow&, const TrioRow&) = default;
};

struct EvaluationResult {
    RestorationScores scores;
    std::vector<TrioRow> rows;
    double mean_l1_input = 0.0;
    double mean_l1_predicted = 0.0;
    DetectorSpec detector;
    friend bool operator==(const EvaluationResult&, const EvaluationResult&) = default;
};

[[nodiscard]] inline EvaluationResult evaluate_trios(const std::vector<EvaluationTrio>& trios, const DetectorSpec& spec) {
    if (trios.empty()) fail(ErrorKind::InvalidArgument, "no trios to evaluate");
    const auto detector = make_detector(spec);
    EvaluationResult r;
    r.detector = spec;
    std::vector<TrioCounts> counts;
    for (const auto& t : trios) {
        TrioRow row{count_trio(*detector, t), mean_abs_diff(t.input(), t.ground_truth()),
                    mean_abs_diff(t.predicted(), t.ground_truth())};
        counts.push_back(row.counts);
        r.rows.push_back(std::move(row));
    }
    std::sort(r.rows.begin(), r.rows.end(), [](const TrioRow& a, const TrioRow& b) { return a.counts.id < b.counts.id; });
    for (const auto& row : r.rows) {
        r.mean_l1_input += row.l1_input;
        r.mean_l1_predicted += row.l1_predicted;
    }
    r.mean_l1_input /= static_cast<double>(r.rows.size());
    r.mean_l1_predicted /= static_cast<double>(r.rows.size());
    r.scores = restoration_scores(std::move(counts));
    return r;
}

using Predictor = std::function<RasterImage(const RasterImage&)>;

/// Builds trios from `predict(distorted)`; predictions are snapped to the 8-bit
/// grid so the numbers match what a stored prediction would score.
[[nodiscard]] inline EvaluationResult evaluate_predictions(const std::vector<AlignedPair>& pairs, const Predictor& predict,
                                                           const DetectorSpec& spec) {
    std::vector<EvaluationTrio> trios;
    trios.reserve(pairs.size());
    for (const auto& p : pairs) {
        trios.emplace_back(p.id(), p.distorted(), quantize_8bit(predict(p.distorted())), p.clear());
    }
    return evaluate_trios(trios, spec);
}

[[nodiscard]] inline EvaluationResult evaluate_model(const Generator& generator, const std::vector<AlignedPair>& pairs,
                                                     const DetectorSpec& spec) {
    return evaluate_predictions(
        pairs, [&](const RasterImage& img) { return generator_forward(generator, img); }, spec);
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr double kReferenceTerm1 = 0.12;
inline constexpr double kReferenceTerm2 = 0.94;

[[nodiscard]] inline nlohmann::json to_json(const EvaluationResult& r, const nlohmann::json& provenance = {}) {
    nlohmann::json rows = nlohmann::json::array();
    std::vector<std::string> above_one;
    for (const auto& row : r.rows) {
        nlohmann::json j = {{"id", row.counts.id},   {"n_c", row.counts.n_c},      {"n_d", row.counts.n_d},
                            {"n_p", row.counts.n_p}, {"l1_input", row.l1_input}, {"l1_predicted", row.l1_predicted}};
        if (row.counts.n_c > 0) {
            const double ri = static_cast<double>(row.counts.n_d) / row.counts.n_c;
            const double rp = static_cast<double>(row.counts.n_p) / row.counts.n_c;
            j["ratio_input"] = ri;
            j["ratio_predicted"] = rp;
            if (ri > 1.0 || rp > 1.0) above_one.push_back(row.counts.id);
        } else {
            j["ratio_input"] = nullptr;
            j["ratio_predicted"] = nullptr;
        }
        rows.push_back(std::move(j));
    }
    return {{"scores", r.scores},
            {"mean_l1_input", r.mean_l1_input},
            {"mean_l1_predicted", r.mean_l1_predicted},
            {"detector", r.detector.to_json()},
            {"detector_fingerprint", r.detector.fingerprint()},
            {"counting", "raw detection counts labelled 'car'; no matching against ground-truth boxes; "
                         "trios whose clear image has no detections are skipped"},
            {"ratios_above_one", above_one},
            {"reference_targets", {{"term1", kReferenceTerm1}, {"term2", kReferenceTerm2}}},
            {"provenance", provenance.is_null() ? nlohmann::json::object() : provenance},
            {"rows", rows}};
}

[[nodiscard]] inline EvaluationResult evaluation_result_from_json(const nlohmann::json& j) {
    try {
        EvaluationResult r;
        r.scores = j.at("scores").get<RestorationScores>();
        r.mean_l1_input = j.at("mean_l1_input").get<double>();
        r.mean_l1_predicted = j.at("mean_l1_predicted").get<double>();
        r.detector = detector_spec_from_json(j.at("detector"));
        for (const auto& row : j.at("rows")) {
            r.rows.push_back({{row.at("id").get<std::string>(), row.at("n_c").get<int>(), row.at("n_d").get<int>(),
                               row.at("n_p").get<int>()},
                              row.at("l1_input").get<double>(),
                              row.at("l1_predicted").get<double>()});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::DecodeFailure, std::string("report: ") + e.what());
    }
}

namespace detail {

/// Draws one histogram panel of per-trio ratios into `canvas` at `origin`.
inline void draw_histogram(cv::Mat& canvas, cv::Point origin, cv::Size size, const std::vector<double>& ratios,
                           double max_ratio, const std::string& title, const cv::Scalar& color) {
    const int bins = static_cast<int>(std::ceil(max_ratio / 0.1));
    std::vector<int> hist(static_cast<std::size_t>(bins), 0);
    for (const double r : ratios) {
        hist[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(r / 0.1)))]++;
    }
    const int peak = std::max(1, *std::max_element(hist.begin(), hist.end()));
    const int left = origin.x + 40;
    const int bottom = origin.y + size.height - 40;
    const int plot_w = size.width - 60;
    const int plot_h = size.height - 80;
    const cv::Scalar ink(40, 40, 40);
    cv::line(canvas, {left, bottom}, {left + plot_w, bottom}, ink, 1);
    cv::line(canvas, {left, bottom}, {left, bottom - plot_h}, ink, 1);
    const double bw = static_cast<double>(plot_w) / bins;
    for (int b = 0; b < bins; ++b) {
        const int bar_h = static_cast<int>(std::lround(static_cast<double>(hist[b]) / peak * plot_h));
        if (bar_h == 0) continue;
        cv::rectangle(canvas, cv::Point(left + static_cast<int>(b * bw) + 1, bottom - bar_h),
                      cv::Point(left + static_cast<int>((b + 1) * bw) - 1, bottom - 1), color, cv::FILLED);
    }
    for (int t = 0; t <= static_cast<int>(max_ratio * 2 + 1e-9); ++t) {
        const double v = t * 0.5;
        const int x = left + static_cast<int>(v / 0.1 * bw);
        char label[16];
        std::snprintf(label, sizeof(label), "%.1f", v);
        cv::putText(canvas, label, {x - 10, bottom + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1, cv::LINE_AA);
    }
    cv::putText(canvas, std::to_string(peak), {origin.x + 5, bottom - plot_h + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1,
                cv::LINE_AA);
    cv::putText(canvas, title, {left, origin.y + 24}, cv::FONT_HERSHEY_SIMPLEX, 0.55, ink, 1, cv::LINE_AA);
}

}  // namespace detail

/// Renders per-trio detection ratios for inputs and predictions side by side.
inline void write_ratio_plot(const std::filesystem::path& path, const EvaluationResult& r) {
    std::vector<double> input, predicted;
    for (const auto& row : r.rows) {
        if (row.counts.n_c == 0) continue;
        input.push_back(static_cast<double>(row.counts.n_d) / row.counts.n_c);
        predicted.push_back(static_cast<double>(row.counts.n_p) / row.counts.n_c);
    }
    double max_ratio = 1.0;
    for (const double v : input) max_ratio = std::max(max_ratio, v);
    for (const double v : predicted) max_ratio = std::max(max_ratio, v);
    max_ratio = std::ceil(max_ratio * 2.0) / 2.0 + 0.1;

    const cv::Size panel(400, 300);
    cv::Mat canvas(panel.height, panel.width * 2, CV_8UC3, cv::Scalar(255, 255, 255));
    char t1[64], t2[64];
    std::snprintf(t1, sizeof(t1), "input n_d/n_c (mean %.3f)", r.scores.term1);
    std::snprintf(t2, sizeof(t2), "predicted n_p/n_c (mean %.3f)", r.scores.term2);
    detail::draw_histogram(canvas, {0, 0}, panel, input, max_ratio, t1, cv::Scalar(60, 60, 200));
    detail::draw_histogram(canvas, {panel.width, 0}, panel, predicted, max_ratio, t2, cv::Scalar(60, 160, 60));
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), canvas);
    } catch (const cv::Exception& e) {
        fail(ErrorKind::IoFailure, path.string() + ": " + e.what());
    }
    if (!ok) fail(ErrorKind::IoFailure, "cannot write " + path.string());
}

struct ReportPaths {
    std::filesystem::path json;
    std::filesystem::path plot;
};

/// Writes report.json and ratios.png into `out_dir`.
inline ReportPaths emit_report(const EvaluationResult& r, const std::filesystem::path& out_dir,
                               const nlohmann::json& provenance = {}) {
    if (r.rows.empty()) fail(ErrorKind::InvalidArgument, "report needs at least one trio row");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(ErrorKind::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());
    ReportPaths paths{out_dir / "report.json", out_dir / "ratios.png"};
    write_json_file(paths.json, to_json(r, provenance));
    write_ratio_plot(paths.plot, r);
    return paths;
}

}  // namespace derain
