#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace derain;
using testing_support::random_image;
using testing_support::TempDir;

TEST(Image, RejectsOutOfRangeAndTinyImages) {
    EXPECT_ERROR_KIND(RasterImage(7, 8), ErrorKind::InvalidImage);
    EXPECT_ERROR_KIND(RasterImage(8, 8, 1.5), ErrorKind::InvalidImage);
    RasterImage img(8, 8, 0.5);
    EXPECT_ERROR_KIND(img.set(0, 0, 0, -0.1), ErrorKind::InvalidImage);
}

TEST(Image, PngRoundTripIsLosslessOnByteGrid) {
    TempDir dir("png");
    const auto img = random_image(19, 11, 4);
    write_png(dir.path() / "a.png", img);
    EXPECT_EQ(read_image(dir.path() / "a.png"), img);
}

TEST(Image, QuantizeLandsOnByteGrid) {
    const auto img = random_image(8, 8, 5, false);
    const auto q = quantize_8bit(img);
    for (const double v : q.values()) EXPECT_DOUBLE_EQ(v, std::round(v * 255.0) / 255.0);
    EXPECT_LE(mean_abs_diff(img, q), 0.5 / 255.0 + 1e-12);
}

TEST(Image, DecodeFailure) {
    TempDir dir("bad");
    write_text_file(dir.path() / "x.png", "not an image");
    EXPECT_ERROR_KIND((void)read_image(dir.path() / "x.png"), ErrorKind::DecodeFailure);
}

TEST(Pairs, DimensionMismatchRejected) {
    EXPECT_ERROR_KIND(AlignedPair("a", RasterImage(8, 8), RasterImage(8, 9)), ErrorKind::DimensionMismatch);
    EXPECT_ERROR_KIND(AlignedPair("a/b", RasterImage(8, 8), RasterImage(8, 8)), ErrorKind::InvalidArgument);
}

TEST(Loading, PairsSortedById) {
    TempDir dir("load");
    for (const char* id : {"b", "a", "c"}) {
        write_png(dir.path() / (std::string(id) + "_rain.png"), random_image(8, 8, id[0]));
        write_png(dir.path() / (std::string(id) + "_clear.png"), random_image(8, 8, id[0] + 100));
    }
    write_text_file(dir.path() / "notes.txt", "ignored");
    const auto pairs = load_pair_directory(dir.path());
    ASSERT_EQ(pairs.size(), 3u);
    EXPECT_EQ(pairs[0].id(), "a");
    EXPECT_EQ(pairs[2].id(), "c");
    EXPECT_EQ(pairs[1].distorted(), random_image(8, 8, 'b'));
    EXPECT_EQ(pairs[1].clear(), random_image(8, 8, 'b' + 100));
}

TEST(Loading, MissingCounterpart) {
    TempDir dir("missing");
    write_png(dir.path() / "x_rain.png", random_image(8, 8, 1));
    EXPECT_ERROR_KIND((void)load_pair_directory(dir.path()), ErrorKind::MissingCounterpart);
}

TEST(Loading, MismatchedSizesOnDisk) {
    TempDir dir("dims");
    write_png(dir.path() / "x_rain.png", random_image(8, 8, 1));
    write_png(dir.path() / "x_clear.png", random_image(9, 8, 1));
    EXPECT_ERROR_KIND((void)load_pair_directory(dir.path()), ErrorKind::DimensionMismatch);
}

TEST(Loading, UnknownSchemeRejected) {
    EXPECT_ERROR_KIND((void)naming_scheme("nope"), ErrorKind::ConfigInvalid);
}

namespace {

std::vector<AlignedPair> make_pairs(std::size_t n) {
    std::vector<AlignedPair> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        pairs.emplace_back("p" + std::to_string(i), RasterImage(8, 8, 0.0), RasterImage(8, 8, 1.0));
    }
    return pairs;
}

std::vector<std::string> ids(const std::vector<AlignedPair>& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps) out.push_back(p.id());
    return out;
}

}  // namespace

TEST(Split, DisjointCoveringAndSized) {
    const auto split = split_dataset(make_pairs(30), {20, 4, 6}, 1);
    EXPECT_EQ(split.train.size(), 20u);
    EXPECT_EQ(split.validation.size(), 4u);
    EXPECT_EQ(split.test.size(), 6u);
    std::set<std::string> all;
    for (const auto* part : {&split.train, &split.validation, &split.test}) {
        for (const auto& p : *part) EXPECT_TRUE(all.insert(p.id()).second);
    }
    EXPECT_EQ(all.size(), 30u);
}

TEST(Split, DeterministicUnderSeed) {
    const auto a = split_dataset(make_pairs(40), {20, 10, 10}, 99);
    const auto b = split_dataset(make_pairs(40), {20, 10, 10}, 99);
    const auto c = split_dataset(make_pairs(40), {20, 10, 10}, 100);
    EXPECT_EQ(ids(a.train), ids(b.train));
    EXPECT_EQ(ids(a.test), ids(b.test));
    EXPECT_NE(ids(a.train), ids(c.train));
}

TEST(Split, InsufficientPairs) {
    EXPECT_ERROR_KIND((void)split_dataset(make_pairs(10), {8, 2, 1}, 0), ErrorKind::InsufficientPairs);
}

TEST(Split, ProportionalScaleDown) {
    const SplitCounts c = proportional_counts(1000, {});
    EXPECT_EQ(c.train, 975u);  // floor(40000 * 1000 / 41000)
    EXPECT_EQ(c.validation, 12u);
    EXPECT_EQ(c.test, 12u);
    EXPECT_EQ(proportional_counts(50000, {}), SplitCounts{});
}

TEST(Sidecars, BoxesRoundTrip) {
    TempDir dir("boxes");
    SceneGroundTruth gt{{{1, 2, 12, 8}, {20, 30, 12, 8}}, {"car", "car"}};
    write_boxes_sidecar(dir.path(), "s1", gt);
    EXPECT_EQ(read_boxes_sidecar(dir.path(), "s1"), gt);
}

TEST(Trios, WriteReadRoundTrip) {
    TempDir dir("trio");
    std::vector<EvaluationTrio> trios;
    for (int i = 0; i < 3; ++i) {
        trios.emplace_back("t" + std::to_string(i), random_image(10, 9, i), random_image(10, 9, i + 10),
                           random_image(10, 9, i + 20));
    }
    const auto manifest = write_trio_set(trios, dir.path() / "set");
    EXPECT_EQ(read_trio_set(manifest), trios);
}

TEST(Trios, MixedSizesRejected) {
    EXPECT_ERROR_KIND(EvaluationTrio("t", RasterImage(8, 8), RasterImage(8, 8), RasterImage(9, 8)),
                      ErrorKind::DimensionMismatch);
}
