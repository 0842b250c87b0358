#include <gtest/gtest.h>

#include <cmath>

#include "a3/attack.hpp"
#include "a3/losses.hpp"
#include "a3/testkit.hpp"

namespace {

using V = std::vector<double>;

TEST(MarginLoss, Examples) {
    EXPECT_EQ(a3::margin_loss<double>(V{2, 5, 1}, 0), 3.0);
    EXPECT_EQ(a3::margin_loss<double>(V{5, 2, 1}, 0), -3.0);
    EXPECT_EQ(a3::margin_loss<double>(V{4, 4, 0}, 0), 0.0);
    EXPECT_THROW(a3::margin_loss<double>(V{1}, 0), a3::DomainError);
    EXPECT_THROW(a3::margin_loss<double>(V{1, 2}, 2), a3::ValidationError);
}

TEST(MarginLoss, SignAgreesWithPrediction) {
    a3::SplitMix64 rng(4);
    for (int i = 0; i < 2000; ++i) {
        V l(5);
        for (auto& v : l) v = std::round(rng.uniform(-3, 3));  // coarse grid makes ties common
        const std::size_t y = std::size_t(rng.below(5));
        const double m = a3::margin_loss<double>(l, y);
        if (m > 0) {
            EXPECT_NE(a3::predict<double>(l), y);
        }
        if (m < 0) {
            EXPECT_EQ(a3::predict<double>(l), y);
        }
    }
}

TEST(CrossEntropy, Examples) {
    EXPECT_DOUBLE_EQ(a3::cross_entropy_loss<double>(V{0, 0}, 0), std::log(2.0));
    const double big = a3::cross_entropy_loss<double>(V{1000, 0}, 0);
    EXPECT_TRUE(std::isfinite(big));
    EXPECT_NEAR(big, 0.0, 1e-300);
    EXPECT_NEAR(a3::cross_entropy_loss<double>(V{1, 2, 3}, 2), std::log(1 + std::exp(-1.0) + std::exp(-2.0)), 1e-15);
}

TEST(LossGradient, MatchesDefinitions) {
    const V l{1.0, 3.0, 2.0};
    EXPECT_EQ(a3::loss_gradient<double>(l, 0, a3::LossKind::margin()), (V{-1, 1, 0}));
    EXPECT_EQ(a3::loss_gradient<double>(l, 1, a3::LossKind::targeted_margin(2)), (V{0, -1, 1}));
    const auto g = a3::loss_gradient<double>(l, 2, a3::LossKind::cross_entropy());
    const double z = std::exp(1.0) + std::exp(3.0) + std::exp(2.0);
    EXPECT_NEAR(g[0], std::exp(1.0) / z, 1e-15);
    EXPECT_NEAR(g[2], std::exp(2.0) / z - 1.0, 1e-15);
    EXPECT_THROW(a3::targeted_margin_loss<double>(l, 1, 1), a3::ValidationError);
}

TEST(LossKind, StringRoundTrip) {
    for (auto k : {a3::LossKind::margin(), a3::LossKind::cross_entropy(), a3::LossKind::targeted_margin(4)})
        EXPECT_EQ(a3::loss_from_string(a3::to_string(k)), k);
    EXPECT_THROW(a3::loss_from_string("hinge"), a3::ValidationError);
}

TEST(CosineStep, Examples) {
    const double eps = 8.0 / 255.0;
    EXPECT_EQ(a3::cosine_step_size(0, 30, eps), eps);
    EXPECT_NEAR(a3::cosine_step_size(15, 30, eps), 4.0 / 255.0, 1e-17);
    EXPECT_NEAR(a3::cosine_step_size(20, 30, eps), 2.0 / 255.0, 1e-17);
    EXPECT_EQ(a3::cosine_step_size(30, 30, eps), eps);  // t mod N
    EXPECT_THROW(a3::cosine_step_size(0, 0, eps), a3::DomainError);
}

TEST(CosineStep, StrictlyDecreasingWithinPeriod) {
    for (std::size_t n : {2u, 7u, 25u, 50u})
        for (std::size_t t = 1; t < n; ++t)
            EXPECT_LT(a3::cosine_step_size(t, n, 0.3), a3::cosine_step_size(t - 1, n, 0.3));
}

TEST(Project, Examples) {
    const a3::AttackNorm n{a3::NormKind::Linf, 0.05};
    const a3::Tensor<double> x = a3::Tensor<double>::vector({0.5, 0.0, 0.3});
    const auto out = a3::project(x, a3::Tensor<double>::vector({0.62, -0.03, 0.31}), n);
    EXPECT_DOUBLE_EQ(out[0], 0.55);
    EXPECT_EQ(out[1], 0.0);
    EXPECT_EQ(out[2], 0.31);
}

TEST(Project, L2RadialThenBox) {
    const a3::AttackNorm n{a3::NormKind::L2, 0.5};
    const auto x = a3::Tensor<double>::vector({0.5, 0.5});
    const auto out = a3::project(x, a3::Tensor<double>::vector({0.5 + 3.0, 0.5 + 4.0}), n);
    EXPECT_NEAR(out[0], 0.8, 1e-15);
    EXPECT_NEAR(out[1], 0.9, 1e-15);
    const auto boxed = a3::project(x, a3::Tensor<double>::vector({0.5, 1.4}), n);
    EXPECT_EQ(boxed[1], 1.0);
}

TEST(InputStart, ZeroEpsilonIsIdentity) {
    a3::SplitMix64 rng(1);
    const auto x = a3::Tensor<double>::vector({0.1, 0.9, 0.4});
    EXPECT_EQ(a3::sample_input_start(x, {a3::NormKind::Linf, 0.0}, rng), x);
    EXPECT_EQ(a3::sample_input_start(x, {a3::NormKind::L2, 0.0}, rng), x);
}

TEST(InputStart, AlwaysFeasible) {
    a3::SplitMix64 rng(2);
    const auto x = a3::Tensor<double>::vector({0.0, 1.0, 0.5, 0.02});
    for (auto kind : {a3::NormKind::Linf, a3::NormKind::L2}) {
        const a3::AttackNorm n{kind, 0.1};
        for (int i = 0; i < 10000; ++i) {
            const auto s = a3::sample_input_start(x, n, rng);
            ASSERT_TRUE(a3::within_constraints<double>(x.data(), s.data(), n, 0.0));
        }
    }
}

TEST(InputStart, SeededDrawIsReproducible) {
    const auto x = a3::Tensor<double>::vector({0.5, 0.5});
    a3::SplitMix64 a(1), b(1);
    const auto s1 = a3::sample_input_start(x, {a3::NormKind::Linf, 0.1}, a);
    const auto s2 = a3::sample_input_start(x, {a3::NormKind::Linf, 0.1}, b);
    EXPECT_EQ(s1, s2);
    EXPECT_NE(s1, x);
}

struct LinearCase {
    a3::testkit::LinearModelSpec spec;
    a3::Model model;
    a3::Tensor<double> x;
};

LinearCase linear_case(std::uint64_t seed, std::size_t C, std::size_t D) {
    a3::SplitMix64 rng(seed);
    auto spec = a3::testkit::random_linear_spec(C, D, rng);
    auto model = a3::testkit::make_linear_model(spec);
    a3::Tensor<double> x({1, 1, D});
    for (auto& v : x.values()) v = rng.uniform(0.3, 0.7);
    return {spec, model, x};
}

TEST(PgdStep, LinearMarginGainIsExact) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto lc = linear_case(seed, 2, 8);
        const double eps = 0.05;
        const std::size_t y = 0, c = 1;
        const auto r = a3::pgd_step(lc.model, lc.x, y, a3::LossKind::margin(), eps, lc.x, {a3::NormKind::Linf, eps});
        double l1 = 0.0;
        for (std::size_t j = 0; j < 8; ++j) l1 += std::abs(lc.spec.a(c, j) - lc.spec.a(y, j));
        const double before = a3::margin_loss<double>(a3::forward(lc.model, lc.x).data(), y);
        const double after = a3::margin_loss<double>(a3::forward(lc.model, r.next).data(), y);
        EXPECT_NEAR(after - before, eps * l1, 1e-12);
        EXPECT_FALSE(r.zero_gradient);
    }
}

TEST(PgdStep, ZeroGradientLeavesInputAndFlags) {
    const a3::Model m({1, 1, 3}, 2, {a3::Layer::flatten(), a3::Layer::dense(3, 2, std::vector<float>(6, 0.f), {0, 0})});
    const auto x = a3::Tensor<double>({1, 1, 3}, std::vector<double>{0.1, 0.5, 0.9});
    const auto r = a3::pgd_step(m, x, 0, a3::LossKind::margin(), 0.1, x, {a3::NormKind::Linf, 0.1});
    EXPECT_EQ(r.next, x);
    EXPECT_TRUE(r.zero_gradient);
}

TEST(PgdStep, OutputAlwaysFeasible) {
    a3::SplitMix64 rng(10);
    const auto m = a3::testkit::random_cnn(1, 6, 4, rng);
    for (int i = 0; i < 200; ++i) {
        a3::Tensor<double> x({1, 6, 6});
        for (auto& v : x.values()) v = rng.uniform01();
        const a3::AttackNorm n{i % 2 ? a3::NormKind::L2 : a3::NormKind::Linf, 0.1};
        auto start = a3::sample_input_start(x, n, rng);
        const auto r = a3::pgd_step(m, start, 1, a3::LossKind::margin(), 0.1, x, n);
        ASSERT_TRUE(a3::within_constraints<double>(x.data(), r.next.data(), n));
    }
}

TEST(OdiDirection, LinearModelIsNormalisedATw) {
    auto lc = linear_case(3, 4, 5);
    const a3::Direction w{0.3, -0.7, 0.1, 0.9};
    const auto v = a3::odi_direction_vector(lc.model, lc.x, w);
    V atw(5, 0.0);
    double sq = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
        for (std::size_t c = 0; c < 4; ++c) atw[j] += lc.spec.a(c, j) * w[c];
        sq += atw[j] * atw[j];
    }
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(v[j], atw[j] / std::sqrt(sq), 1e-12);

    const auto e2 = a3::odi_direction_vector(lc.model, lc.x, a3::Direction{0, 0, 1, 0});
    double n2 = 0.0;
    for (std::size_t j = 0; j < 5; ++j) n2 += lc.spec.a(2, j) * lc.spec.a(2, j);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(e2[j], lc.spec.a(2, j) / std::sqrt(n2), 1e-12);
}

TEST(OdiDirection, UnitNormOnCnnAndDegenerateThrows) {
    a3::SplitMix64 rng(12);
    const auto m = a3::testkit::random_cnn(1, 8, 10, rng);
    a3::Tensor<double> x({1, 8, 8});
    for (auto& v : x.values()) v = rng.uniform01();
    const auto v = a3::odi_direction_vector(m, x, a3::uniform_direction(10, rng));
    double sq = 0.0;
    for (double e : v.values()) sq += e * e;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);

    const a3::Model zero({1, 1, 2}, 2, {a3::Layer::flatten(), a3::Layer::dense(2, 2, std::vector<float>(4, 0.f), {0, 0})});
    EXPECT_THROW(a3::odi_direction_vector(zero, a3::Tensor<double>({1, 1, 2}, 0.5), a3::Direction{1, -1}),
                 a3::DegenerateDirectionError);
}

TEST(OdiInit, ZeroStepsReturnsInputStart) {
    auto lc = linear_case(5, 3, 6);
    const a3::AttackNorm n{a3::NormKind::Linf, 0.1};
    a3::SplitMix64 a(9), b(9);
    const auto st = a3::odi_init(lc.model, lc.x, a3::Direction{1, 0, -1}, 0.1, 0, n, a);
    EXPECT_EQ(st, a3::sample_input_start(lc.x, n, b));
}

TEST(OdiInit, LinearStepIncreasesObjectiveExactly) {
    auto lc = linear_case(6, 4, 10);
    const a3::Direction w{0.2, -0.5, 0.9, -0.1};
    double l1 = 0.0;
    for (std::size_t j = 0; j < 10; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) s += lc.spec.a(c, j) * w[c];
        l1 += std::abs(s);
    }
    const auto objective = [&](const a3::Tensor<double>& x) {
        const auto f = a3::forward(lc.model, x);
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) s += w[c] * f[c];
        return s;
    };
    a3::Tensor<double> x = lc.x;
    for (int step = 0; step < 3; ++step) {
        a3::ForwardPass<double> pass(lc.model, x.data());
        const auto g = a3::direction_gradient(pass, w);
        const double before = objective(x);
        a3::ascend_inplace<double>(x.data(), g, 0.01, {a3::NormKind::Linf, 0.05});
        EXPECT_NEAR(objective(x) - before, 0.01 * l1, 1e-12);
    }
}

TEST(OdiInit, ResultFeasibleForAnyStepCount) {
    a3::SplitMix64 rng(13);
    const auto m = a3::testkit::random_cnn(1, 6, 5, rng);
    a3::Tensor<double> x({1, 6, 6});
    for (auto& v : x.values()) v = rng.uniform01();
    for (std::size_t n = 0; n < 10; ++n) {
        const a3::AttackNorm norm{a3::NormKind::Linf, 0.2};
        const auto st = a3::odi_init(m, x, a3::uniform_direction(5, rng), 0.2, n, norm, rng);
        EXPECT_TRUE(a3::within_constraints<double>(x.data(), st.data(), norm));
    }
}

TEST(OdiInit, DegenerateStepsFallBackToRandomSigns) {
    const a3::Model zero({1, 1, 4}, 2, {a3::Layer::flatten(), a3::Layer::dense(4, 2, std::vector<float>(8, 0.f), {0, 0})});
    const a3::Tensor<double> x({1, 1, 4}, 0.5);
    a3::SplitMix64 s(1), f(2);
    const a3::AttackNorm n{a3::NormKind::Linf, 0.1};
    const auto r = a3::odi_init_observed<double>(zero, x, a3::Direction{1, -1}, 0.1, 3, n, s, f,
                                                 [](std::span<const double>, std::span<const double>) { return false; });
    EXPECT_EQ(r.degenerate_steps, 3u);
    EXPECT_TRUE(a3::within_constraints<double>(x.data(), r.start.data(), n));
}

}  // namespace
