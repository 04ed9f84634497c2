#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support.hpp"

using namespace derain;

TEST(Seeds, DerivedStreamsDiffer) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 4; ++s) {
        for (std::uint64_t i = 0; i < 64; ++i) seen.insert(derive_seed(7, s, i));
    }
    EXPECT_EQ(seen.size(), 256u);
    EXPECT_EQ(derive_seed(7, 1, 2), derive_seed(7, 1, 2));
}

TEST(Hash, Fnv1aKnownVectors) {
    // Published FNV-1a 64 test vectors.
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Random, Uniform01InRange) {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = uniform01(rng);
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Random, UniformIndexCoversRange) {
    Rng rng(5);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) hits[uniform_index(rng, 7)]++;
    for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(Random, PoissonMeanAndVariance) {
    for (const double mean : {0.5, 4.0, 40.0, 600.0}) {
        Rng rng(11);
        const int n = 20000;
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double k = static_cast<double>(poisson(rng, mean));
            s += k;
            s2 += k * k;
        }
        const double m = s / n;
        const double var = s2 / n - m * m;
        // 5 standard errors of the sample mean; variance within 10%.
        EXPECT_NEAR(m, mean, 5.0 * std::sqrt(mean / n)) << mean;
        EXPECT_NEAR(var / mean, 1.0, 0.1) << mean;
    }
    Rng rng(1);
    EXPECT_EQ(poisson(rng, 0.0), 0u);
}

TEST(Random, ShuffleIsPermutation) {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    Rng rng(9);
    shuffle_in_place(v, rng);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_NE(v, sorted);
}

TEST(Errors, KindIsCarried) {
    EXPECT_ERROR_KIND(fail(ErrorKind::IoFailure, "x"), ErrorKind::IoFailure);
    EXPECT_EQ(to_string(ErrorKind::AllTriosSkipped), "AllTriosSkipped");
}
