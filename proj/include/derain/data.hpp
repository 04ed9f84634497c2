#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "derain/error.hpp"
#include "derain/image.hpp"
#include "derain/util.hpp"

namespace derain {

namespace fs = std::filesystem;
using nlohmann::json;

struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    [[nodiscard]] bool inside(int width, int height) const noexcept {
        return w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= width && y + h <= height;
    }
    [[nodiscard]] bool intersects(const Box& o) const noexcept {
        return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
    }
    [[nodiscard]] long area() const noexcept { return static_cast<long>(w) * h; }
    friend bool operator==(const Box&, const Box&) = default;
};

/// Known car locations for a rendered scene.
struct SceneGroundTruth {
    std::vector<Box> boxes;
    std::vector<std::string> labels;

    void validate(int width, int height) const {
        if (boxes.size() != labels.size()) fail(ErrorKind::InvalidArgument, "boxes/labels length differ");
        for (const auto& b : boxes) {
            if (!b.inside(width, height)) fail(ErrorKind::InvalidArgument, "ground-truth box outside image");
        }
        for (const auto& l : labels) {
            if (l != "car") fail(ErrorKind::InvalidArgument, "unsupported label '" + l + "'");
        }
    }
    friend bool operator==(const SceneGroundTruth&, const SceneGroundTruth&) = default;
};

inline void check_id(const std::string& id) {
    if (id.empty() || id.find_first_of("/\\") != std::string::npos) {
        fail(ErrorKind::InvalidArgument, "id must be a non-empty file-name-safe string: '" + id + "'");
    }
}

class AlignedPair {
public:
    AlignedPair(std::string id, RasterImage distorted, RasterImage clear)
        : id_(std::move(id)), distorted_(std::move(distorted)), clear_(std::move(clear)) {
        check_id(id_);
        if (!distorted_.same_dims(clear_)) {
            fail(ErrorKind::DimensionMismatch,
                 "pair '" + id_ + "': distorted " + std::to_string(distorted_.width()) + "x" +
                     std::to_string(distorted_.height()) + " vs clear " + std::to_string(clear_.width()) +
                     "x" + std::to_string(clear_.height()));
        }
    }

    [[nodiscard]] const std::string& id() const noexcept { return id_; }
    [[nodiscard]] const RasterImage& distorted() const noexcept { return distorted_; }
    [[nodiscard]] const RasterImage& clear() const noexcept { return clear_; }
    [[nodiscard]] int width() const noexcept { return clear_.width(); }
    [[nodiscard]] int height() const noexcept { return clear_.height(); }

    friend bool operator==(const AlignedPair&, const AlignedPair&) = default;

private:
    std::string id_;
    RasterImage distorted_;
    RasterImage clear_;
};

class EvaluationTrio {
public:
    EvaluationTrio(std::string id, RasterImage input, RasterImage predicted, RasterImage ground_truth)
        : id_(std::move(id)),
          input_(std::move(input)),
          predicted_(std::move(predicted)),
          ground_truth_(std::move(ground_truth)) {
        check_id(id_);
        if (!input_.same_dims(predicted_) || !input_.same_dims(ground_truth_)) {
            fail(ErrorKind::DimensionMismatch, "trio '" + id_ + "' has images of different sizes");
        }
    }

    [[nodiscard]] const std::string& id() const noexcept { return id_; }
    [[nodiscard]] const RasterImage& input() const noexcept { return input_; }
    [[nodiscard]] const RasterImage& predicted() const noexcept { return predicted_; }
    [[nodiscard]] const RasterImage& ground_truth() const noexcept { return ground_truth_; }

    friend bool operator==(const EvaluationTrio&, const EvaluationTrio&) = default;

private:
    std::string id_;
    RasterImage input_;
    RasterImage predicted_;
    RasterImage ground_truth_;
};

struct SplitCounts {
    std::size_t train = 40000;
    std::size_t validation = 500;
    std::size_t test = 500;

    [[nodiscard]] std::size_t total() const noexcept { return train + validation + test; }
    friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

struct DatasetSplit {
    std::vector<AlignedPair> train;
    std::vector<AlignedPair> validation;
    std::vector<AlignedPair> test;
};

// ---------------------------------------------------------------------------
// Directory loading

/// Maps file names in a dataset root to pair ids. The default scheme is
/// `<id>_rain.<ext>` / `<id>_clear.<ext>`; other layouts plug in by supplying
/// their own two functions.
struct NamingScheme {
    std::string name;
    /// Returns the pair id if `file` is a distorted image, nullopt otherwise.
    std::function<std::optional<std::string>(const fs::path& file)> distorted_id;
    /// Location of the clear counterpart for a distorted file.
    std::function<fs::path(const fs::path& distorted_file, const std::string& id)> clear_path;
};

[[nodiscard]] inline bool is_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" ||
           ext == ".tiff" || ext == ".ppm";
}

[[nodiscard]] inline NamingScheme rain_clear_naming() {
    NamingScheme scheme;
    scheme.name = "rain_clear";
    scheme.distorted_id = [](const fs::path& file) -> std::optional<std::string> {
        if (!is_image_extension(file)) return std::nullopt;
        const std::string stem = file.stem().string();
        constexpr std::string_view suffix = "_rain";
        if (stem.size() <= suffix.size() || !stem.ends_with(suffix)) return std::nullopt;
        return stem.substr(0, stem.size() - suffix.size());
    };
    scheme.clear_path = [](const fs::path& distorted, const std::string& id) {
        return distorted.parent_path() / (id + "_clear" + distorted.extension().string());
    };
    return scheme;
}

[[nodiscard]] inline NamingScheme naming_scheme(std::string_view id) {
    if (id == "rain_clear") return rain_clear_naming();
    fail(ErrorKind::ConfigInvalid, "unknown naming scheme '" + std::string(id) + "'");
}

/// Loads every distorted/clear pair under `root` (non-recursive), sorted by id.
[[nodiscard]] inline std::vector<AlignedPair> load_pair_directory(const fs::path& root,
                                                                  const NamingScheme& scheme = rain_clear_naming()) {
    if (!fs::is_directory(root)) fail(ErrorKind::IoFailure, "not a directory: " + root.string());

    std::vector<std::pair<std::string, fs::path>> found;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        if (auto id = scheme.distorted_id(entry.path())) found.emplace_back(std::move(*id), entry.path());
    }
    std::sort(found.begin(), found.end());

    std::vector<AlignedPair> pairs;
    pairs.reserve(found.size());
    for (std::size_t i = 0; i < found.size(); ++i) {
        const auto& [id, distorted_path] = found[i];
        if (i > 0 && found[i - 1].first == id) fail(ErrorKind::InvalidArgument, "duplicate pair id '" + id + "'");
        const fs::path clear_path = scheme.clear_path(distorted_path, id);
        if (!fs::exists(clear_path)) {
            fail(ErrorKind::MissingCounterpart, distorted_path.filename().string() + " has no clear counterpart " +
                                                    clear_path.filename().string());
        }
        pairs.emplace_back(id, read_image(distorted_path), read_image(clear_path));
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Splitting

/// Scales `requested` down to fit `available` while keeping its ratio
/// (each count rounded down). Returns `requested` unchanged when it fits.
[[nodiscard]] inline SplitCounts proportional_counts(std::size_t available, const SplitCounts& requested) {
    const std::size_t total = requested.total();
    if (total <= available) return requested;
    auto scale = [&](std::size_t n) {
        return static_cast<std::size_t>((static_cast<unsigned __int128>(n) * available) / total);
    };
    return {scale(requested.train), scale(requested.validation), scale(requested.test)};
}

/// Seeded shuffle followed by an in-order train/validation/test partition.
[[nodiscard]] inline DatasetSplit split_dataset(std::vector<AlignedPair> pairs, const SplitCounts& counts,
                                                std::uint64_t seed) {
    if (counts.total() > pairs.size()) {
        fail(ErrorKind::InsufficientPairs, "requested " + std::to_string(counts.total()) + " pairs but only " +
                                               std::to_string(pairs.size()) + " available");
    }
    std::set<std::string> ids;
    for (const auto& p : pairs) {
        if (!ids.insert(p.id()).second) fail(ErrorKind::InvalidArgument, "duplicate pair id '" + p.id() + "'");
    }

    Rng rng(seed);
    shuffle_in_place(pairs, rng);

    DatasetSplit split;
    auto take = [&pairs, pos = std::size_t{0}](std::size_t n) mutable {
        std::vector<AlignedPair> out(std::make_move_iterator(pairs.begin() + pos),
                                     std::make_move_iterator(pairs.begin() + pos + n));
        pos += n;
        return out;
    };
    split.train = take(counts.train);
    split.validation = take(counts.validation);
    split.test = take(counts.test);
    return split;
}

// ---------------------------------------------------------------------------
// Sidecars and trio sets

[[nodiscard]] inline json to_json(const SceneGroundTruth& gt) {
    json boxes = json::array();
    for (const auto& b : gt.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
    return {{"boxes", boxes}, {"labels", gt.labels}};
}

[[nodiscard]] inline SceneGroundTruth scene_ground_truth_from_json(const json& j) {
    SceneGroundTruth gt;
    for (const auto& b : j.at("boxes")) {
        if (!b.is_array() || b.size() != 4) fail(ErrorKind::DecodeFailure, "box must be [x,y,w,h]");
        gt.boxes.push_back({b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()});
    }
    gt.labels = j.at("labels").get<std::vector<std::string>>();
    if (gt.boxes.size() != gt.labels.size()) fail(ErrorKind::DecodeFailure, "boxes/labels length differ");
    return gt;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) fail(ErrorKind::IoFailure, "write failed: " + path.string());
}

[[nodiscard]] inline std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

[[nodiscard]] inline json read_json_file(const fs::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::DecodeFailure, path.string() + ": " + e.what());
    }
}

inline void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

[[nodiscard]] inline fs::path boxes_sidecar_path(const fs::path& dir, const std::string& id) {
    return dir / (id + "_boxes.json");
}

inline void write_boxes_sidecar(const fs::path& dir, const std::string& id, const SceneGroundTruth& gt) {
    write_json_file(boxes_sidecar_path(dir, id), to_json(gt));
}

[[nodiscard]] inline SceneGroundTruth read_boxes_sidecar(const fs::path& dir, const std::string& id) {
    try {
        return scene_ground_truth_from_json(read_json_file(boxes_sidecar_path(dir, id)));
    } catch (const json::exception& e) {
        fail(ErrorKind::DecodeFailure, id + " boxes: " + e.what());
    }
}

inline constexpr const char* kTrioManifest = "manifest.json";

/// Writes each trio as three PNGs plus a manifest with paths relative to `out_dir`.
inline fs::path write_trio_set(const std::vector<EvaluationTrio>& trios, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorKind::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

    json entries = json::array();
    for (const auto& t : trios) {
        const std::string input = t.id() + "_input.png";
        const std::string predicted = t.id() + "_predicted.png";
        const std::string ground_truth = t.id() + "_ground_truth.png";
        write_png(out_dir / input, t.input());
        write_png(out_dir / predicted, t.predicted());
        write_png(out_dir / ground_truth, t.ground_truth());
        entries.push_back({{"id", t.id()}, {"input", input}, {"predicted", predicted}, {"ground_truth", ground_truth}});
    }
    const fs::path manifest = out_dir / kTrioManifest;
    write_json_file(manifest, json{{"trios", entries}});
    return manifest;
}

[[nodiscard]] inline std::vector<EvaluationTrio> read_trio_set(const fs::path& manifest_path) {
    const json manifest = read_json_file(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    std::vector<EvaluationTrio> trios;
    try {
        for (const auto& e : manifest.at("trios")) {
            trios.emplace_back(e.at("id").get<std::string>(), read_image(dir / e.at("input").get<std::string>()),
                               read_image(dir / e.at("predicted").get<std::string>()),
                               read_image(dir / e.at("ground_truth").get<std::string>()));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::DecodeFailure, manifest_path.string() + ": " + e.what());
    }
    return trios;
}

}  // namespace derain
