#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "derain/error.hpp"

namespace derain {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

/// A named, shaped array of doubles.
struct ParamArray {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    friend bool operator==(const ParamArray&, const ParamArray&) = default;
};

[[nodiscard]] inline std::size_t shape_volume(const std::vector<int>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

/// Binary container: an 8-byte magic, a u32 format version, a u64 header
/// length, a UTF-8 JSON header (free-form `meta` plus the array manifest), then
/// every array's values as little-endian f64 in manifest order.
struct Archive {
    static constexpr std::string_view kMagic = "DERAINAR";
    static constexpr std::uint32_t kVersion = 1;

    nlohmann::json meta = nlohmann::json::object();
    std::vector<ParamArray> arrays;
};

namespace detail {

template <typename T>
void append_raw(std::string& out, const T& value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T read_raw(std::string_view bytes, std::size_t& pos) {
    if (pos + sizeof(T) > bytes.size()) fail(ErrorKind::DecodeFailure, "archive truncated");
    T value;
    std::memcpy(&value, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

}  // namespace detail

[[nodiscard]] inline std::string encode_archive(const Archive& archive) {
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& a : archive.arrays) {
        if (shape_volume(a.shape) != a.values.size()) {
            fail(ErrorKind::ShapeMismatch, "array '" + a.name + "' size does not match its shape");
        }
        manifest.push_back({{"name", a.name}, {"shape", a.shape}});
    }
    const nlohmann::json header = {{"format", "derain-archive"},
                                   {"version", Archive::kVersion},
                                   {"meta", archive.meta},
                                   {"arrays", manifest}};
    const std::string header_text = header.dump();

    std::string out(Archive::kMagic);
    detail::append_raw(out, Archive::kVersion);
    detail::append_raw(out, static_cast<std::uint64_t>(header_text.size()));
    out += header_text;
    for (const auto& a : archive.arrays) {
        out.append(reinterpret_cast<const char*>(a.values.data()), a.values.size() * sizeof(double));
    }
    return out;
}

[[nodiscard]] inline Archive decode_archive(std::string_view bytes) {
    if (bytes.substr(0, Archive::kMagic.size()) != Archive::kMagic) fail(ErrorKind::DecodeFailure, "bad archive magic");
    std::size_t pos = Archive::kMagic.size();
    const auto version = detail::read_raw<std::uint32_t>(bytes, pos);
    if (version != Archive::kVersion) {
        fail(ErrorKind::DecodeFailure, "unsupported archive version " + std::to_string(version));
    }
    const auto header_len = detail::read_raw<std::uint64_t>(bytes, pos);
    if (pos + header_len > bytes.size()) fail(ErrorKind::DecodeFailure, "archive header truncated");

    Archive archive;
    try {
        const auto header = nlohmann::json::parse(bytes.substr(pos, header_len));
        pos += header_len;
        archive.meta = header.at("meta");
        for (const auto& entry : header.at("arrays")) {
            ParamArray a;
            a.name = entry.at("name").get<std::string>();
            a.shape = entry.at("shape").get<std::vector<int>>();
            const std::size_t n = shape_volume(a.shape);
            if (pos + n * sizeof(double) > bytes.size()) fail(ErrorKind::DecodeFailure, "archive data truncated");
            a.values.resize(n);
            std::memcpy(a.values.data(), bytes.data() + pos, n * sizeof(double));
            pos += n * sizeof(double);
            archive.arrays.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::DecodeFailure, std::string("archive header: ") + e.what());
    }
    if (pos != bytes.size()) fail(ErrorKind::DecodeFailure, "trailing bytes after archive data");
    return archive;
}

inline void write_archive(const std::filesystem::path& path, const Archive& archive) {
    const std::string bytes = encode_archive(archive);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::IoFailure, "write failed: " + path.string());
}

[[nodiscard]] inline Archive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_archive(bytes);
}

}  // namespace derain
