#include <gtest/gtest.h>

#include "a3/stats.hpp"
#include "a3/testkit.hpp"

namespace {

TEST(BiasMatrix, SingleRecord) {
    a3::DirectionSet s(3);
    s.record({0, 0, 2, {0.1, -0.4, 0.7}});
    // Error classes of image 0 by clean logit: class 2 (rank 1), class 1 (rank 2).
    const auto m = a3::bias_matrix(s, {{5.0, 1.0, 3.0}});
    EXPECT_EQ(m.counts, (std::vector<std::size_t>{1, 0}));
    EXPECT_EQ(m.cells[0], (std::vector<double>{0.7, -0.4, 0.1}));
    EXPECT_EQ(m.cells[1], (std::vector<double>{0.0, 0.0, 0.0}));
    EXPECT_EQ(m.mean_true, 0.1);
    EXPECT_EQ(m.mean_predicted, 0.7);
}

TEST(BiasMatrix, EmptyIsZero) {
    const auto m = a3::bias_matrix(a3::DirectionSet(4), {});
    EXPECT_EQ(m.total, 0u);
    for (const auto& row : m.cells)
        for (double v : row) EXPECT_EQ(v, 0.0);
}

TEST(BiasMatrix, KnownMeans) {
    a3::DirectionSet s(3);
    const std::vector<std::vector<double>> logits{{0, 2, 1}, {3, 0, 1}, {0, 1, 2}};
    s.record({0, 0, 1, {0.2, 0.4, 0.6}});   // rank 1
    s.record({1, 1, 0, {-0.2, 0.5, 0.1}});  // rank 1
    s.record({2, 2, 0, {0.9, -0.3, 0.3}});  // rank 2 (class 1 outranks 0)
    const auto m = a3::bias_matrix(s, logits);
    EXPECT_EQ(m.counts, (std::vector<std::size_t>{2, 1}));
    // Row 1: image 0 order (1,2) -> (0.4,0.6), true 0.2; image 1 order (0,2) -> (-0.2,0.1), true 0.5.
    EXPECT_NEAR(m.cells[0][0], 0.1, 1e-12);
    EXPECT_NEAR(m.cells[0][1], 0.35, 1e-12);
    EXPECT_NEAR(m.cells[0][2], 0.35, 1e-12);
    EXPECT_NEAR(m.cells[1][0], -0.3, 1e-12);
    EXPECT_NEAR(m.cells[1][1], 0.9, 1e-12);
    EXPECT_NEAR(m.cells[1][2], 0.3, 1e-12);
    EXPECT_NEAR(m.mean_true, (0.2 + 0.5 + 0.3) / 3, 1e-12);
    EXPECT_NEAR(m.mean_predicted, (0.4 - 0.2 + 0.9) / 3, 1e-12);
}

TEST(BiasMatrix, CountWeightedUnion) {
    a3::SplitMix64 rng(3);
    const std::size_t C = 4, n = 50;
    std::vector<std::vector<double>> logits(n);
    a3::DirectionSet a(C), b(C), all(C);
    for (std::size_t i = 0; i < n; ++i) {
        logits[i] = a3::uniform_direction(C, rng);
        const std::size_t y = rng.below(C);
        const std::size_t p = (y + 1 + rng.below(C - 1)) % C;
        a3::DirectionRecord r{i, y, p, a3::uniform_direction(C, rng)};
        (i % 3 ? a : b).record(r);
        all.record(r);
    }
    const auto ma = a3::bias_matrix(a, logits), mb = a3::bias_matrix(b, logits), mall = a3::bias_matrix(all, logits);
    for (std::size_t r = 0; r + 1 < C; ++r) {
        ASSERT_EQ(mall.counts[r], ma.counts[r] + mb.counts[r]);
        if (mall.counts[r] == 0) continue;
        for (std::size_t k = 0; k < C; ++k)
            EXPECT_NEAR(mall.cells[r][k],
                        (ma.cells[r][k] * double(ma.counts[r]) + mb.cells[r][k] * double(mb.counts[r])) /
                            double(mall.counts[r]),
                        1e-12);
    }
}

TEST(BiasMatrix, CsvLayout) {
    a3::DirectionSet s(3);
    s.record({0, 0, 2, {0.5, -0.25, 0.75}});
    const auto csv = a3::bias_matrix_csv(a3::bias_matrix(s, {{5.0, 1.0, 3.0}}));
    EXPECT_EQ(csv, "rank,count,err1,err2,true\n1,1,0.75,-0.25,0.5\n2,0,0,0,0\n");
}

TEST(Percentiles, Definition) {
    EXPECT_EQ(a3::loss_percentiles(std::vector<double>{5, 1}), (std::vector<double>{0, 50}));
    EXPECT_EQ(a3::loss_percentiles(std::vector<double>{3, 9, 3, 1}), (std::vector<double>{25, 0, 25, 75}));
}

TEST(Percentiles, RaisingOneLossNeverWorsensItsRank) {
    a3::SplitMix64 rng(4);
    std::vector<double> l(30);
    for (auto& v : l) v = rng.uniform(-1, 1);
    double prev = a3::loss_percentiles(l)[7];
    for (int k = 0; k < 40; ++k) {
        l[7] += 0.05;
        const double now = a3::loss_percentiles(l)[7];
        EXPECT_LE(now, prev);
        prev = now;
    }
    EXPECT_EQ(prev, 0.0);
}

TEST(EasyHard, ZeroEpsilonAllHardAndMisclassifiedEasy) {
    a3::SplitMix64 rng(5);
    const auto model = a3::testkit::random_mlp(5, 8, 3, rng);
    auto data = a3::testkit::relabel_with_predictions(model, a3::testkit::random_dataset({1, 1, 5}, 20, 3, rng));
    data.labels[4] = (data.labels[4] + 1) % 3;
    a3::AttackConfig c;
    c.norm.epsilon = 0.0;
    const auto tags = a3::tag_easy_hard(model, data, 50, c);
    for (std::size_t i = 0; i < tags.size(); ++i)
        EXPECT_EQ(tags[i], i == 4 ? a3::AttackTag::Easy : a3::AttackTag::Hard);
    EXPECT_THROW(a3::tag_easy_hard(model, data, 0, c), a3::ValidationError);
}

TEST(EasyHard, StableAcrossReruns) {
    a3::SplitMix64 rng(6);
    const auto model = a3::testkit::random_cnn(1, 8, 4, rng);
    const auto data = a3::testkit::relabel_with_predictions(model, a3::testkit::random_dataset({1, 8, 8}, 30, 4, rng));
    a3::AttackConfig c;
    c.norm.epsilon = 0.05;
    c.seed = 3;
    EXPECT_EQ(a3::tag_easy_hard(model, data, 100, c), a3::tag_easy_hard(model, data, 100, c));
}

TEST(LossTrace, ShapeAndCsv) {
    a3::SplitMix64 rng(7);
    const auto model = a3::testkit::random_cnn(1, 8, 4, rng);
    const auto data = a3::testkit::relabel_with_predictions(model, a3::testkit::random_dataset({1, 8, 8}, 25, 4, rng));
    a3::AttackConfig c;
    c.norm.epsilon = 0.05;
    c.n_init = 2;
    const auto tags = a3::tag_easy_hard(model, data, 50, c);
    const auto t = a3::loss_percentile_trace(model, data, tags, 10, c);
    EXPECT_EQ(t.percentile.size(), 2u + 10u + 1u);
    for (const auto& row : t.percentile) {
        ASSERT_EQ(row.size(), t.image_ids.size());
        for (double v : row) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 100.0);
        }
    }
    const auto csv = a3::loss_trace_csv(t);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), std::ptrdiff_t(1 + t.percentile.size() * t.image_ids.size()));
}

}  // namespace
