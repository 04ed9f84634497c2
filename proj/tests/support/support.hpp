#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "derain/derain.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("derain_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Image whose values sit on the 8-bit grid, so PNG round trips are exact.
inline derain::RasterImage random_image(int w, int h, std::uint64_t seed, bool quantized = true) {
    derain::Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(3) * w * h);
    for (double& x : v) x = quantized ? static_cast<double>(derain::uniform_index(rng, 256)) / 255.0 : derain::uniform01(rng);
    return derain::RasterImage(w, h, std::move(v));
}

}  // namespace testing_support

#define EXPECT_ERROR_KIND(stmt, k)                                                  \
    do {                                                                            \
        try {                                                                       \
            stmt;                                                                   \
            ADD_FAILURE() << "expected " << derain::to_string(k) << ", no throw";   \
        } catch (const derain::Error& e_) {                                         \
            EXPECT_EQ(e_.kind(), k) << e_.what();                                   \
        }                                                                           \
    } while (0)
