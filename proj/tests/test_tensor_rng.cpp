#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "a3/rng.hpp"
#include "a3/tensor.hpp"

namespace {

TEST(Tensor, ShapeMustMatchData) {
    EXPECT_THROW(a3::Tensor<float>(a3::Shape{2, 3}, std::vector<float>(5)), a3::DimensionError);
    a3::Tensor<double> t(a3::Shape{2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_EQ(a3::shape_string(t.shape()), "(2,3)");
    EXPECT_EQ(a3::Tensor<double>::precision(), a3::Precision::F64);
    EXPECT_EQ(a3::Tensor<float>::precision(), a3::Precision::F32);
}

TEST(Tensor, FinitenessAndCast) {
    auto t = a3::Tensor<double>::vector({0.25, -1.0});
    EXPECT_TRUE(t.all_finite());
    const auto f = t.cast<float>();
    EXPECT_EQ(f[0], 0.25f);
    t[1] = std::nan("");
    EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, Distances) {
    const std::vector<double> a{0.0, 0.5, 1.0}, b{0.1, 0.5, 0.7};
    EXPECT_DOUBLE_EQ(a3::linf_distance<double>(a, b), 0.30000000000000004);
    EXPECT_NEAR(a3::l2_distance<double>(a, b), std::sqrt(0.01 + 0.09), 1e-15);
}

// Reference stream of SplitMix64 seeded with 0.
TEST(SplitMix64, MatchesReferenceSequence) {
    a3::SplitMix64 g(0);
    EXPECT_EQ(g(), 0xE220A8397B1DCDAFULL);
    EXPECT_EQ(g(), 0x6E789E6AA1B965F4ULL);
    EXPECT_EQ(g(), 0x06C45D188009454FULL);
}

TEST(SplitMix64, UniformUsesTop53Bits) {
    a3::SplitMix64 a(42), b(42);
    const double u = a.uniform01();
    EXPECT_EQ(u, double(b() >> 11) * 0x1.0p-53);
    for (int i = 0; i < 10000; ++i) {
        const double v = a.uniform(-1.0, 1.0);
        ASSERT_GE(v, -1.0);
        ASSERT_LT(v, 1.0);
        ASSERT_LT(a.below(7), 7u);
    }
}

TEST(Substream, SameKeyGivesSameStream) {
    auto a = a3::derive_substream(7, 3, 2, a3::StreamTag::Direction);
    auto b = a3::derive_substream(7, 3, 2, a3::StreamTag::Direction);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
}

TEST(Substream, KeyFormula) {
    const std::uint64_t seed = 11, id = 5, r = 3, tag = 2;
    const std::uint64_t key = seed ^ (id * 0x9E3779B97F4A7C15ULL) ^ (r << 32) ^ tag;
    auto s = a3::derive_substream(seed, id, r, tag);
    a3::SplitMix64 ref(a3::splitmix64_mix(key));
    EXPECT_EQ(s(), ref());
}

TEST(Substream, TagsSeparateStreams) {
    std::size_t collisions = 0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
        auto a = a3::derive_substream(99, t % 37, t % 5, 2 * t + 1);
        auto b = a3::derive_substream(99, t % 37, t % 5, 2 * t + 2);
        collisions += a() == b();
    }
    EXPECT_EQ(collisions, 0u);

    std::set<std::uint64_t> firsts;
    for (std::uint64_t id = 0; id < 1000; ++id) firsts.insert(a3::derive_substream(1, id, 0, 1)());
    EXPECT_EQ(firsts.size(), 1000u);
}

TEST(Substream, UniformMeanWithinThreeSigma) {
    auto g = a3::derive_substream(2024, 0, 0, a3::StreamTag::Direction);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += g.uniform(-1.0, 1.0);
    const double sigma = std::sqrt(1.0 / 3.0 / n);  // sd of U(-1,1) is 1/sqrt(3)
    EXPECT_LT(std::abs(sum / n), 3.0 * sigma);
}

TEST(SplitMix64, NormalMoments) {
    a3::SplitMix64 g(5);
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = g.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.02);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

}  // namespace
