#include <gtest/gtest.h>

#include <limits>

#include "a3/osd.hpp"

namespace {

TEST(DiscardRate, DefaultSchedule) {
    const a3::OsdSchedule s;
    const std::vector<double> expect{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.935, 0.97, 0.97, 0.97};
    for (std::size_t r = 0; r < expect.size(); ++r) EXPECT_EQ(a3::discard_rate(r, s), expect[r]) << "r=" << r;
    EXPECT_EQ(a3::discard_rate(1000, s), 0.97);
}

TEST(DiscardRate, PhaseTwoStartsAtFirstOvershoot) {
    a3::OsdSchedule s;
    s.phi = 0.05;
    // 0.05, 0.15, ..., 0.85, then 0.95 > 0.9 so the 0.035 increments start at r = 9.
    EXPECT_EQ(a3::discard_rate(8, s), 0.85);
    EXPECT_EQ(a3::discard_rate(9, s), 0.935);
    EXPECT_EQ(a3::discard_rate(10, s), 0.97);
    s.iota = 0.0;
    EXPECT_EQ(a3::discard_rate(50, s), 0.05);
}

TEST(IterationSchedule, Default) {
    const a3::OsdSchedule s;
    const std::vector<std::size_t> expect{25, 30, 35, 40, 45, 50, 50, 50};
    for (std::size_t r = 0; r < expect.size(); ++r) EXPECT_EQ(a3::iters_for_restart(r, s), expect[r]);
    EXPECT_EQ(a3::iters_for_restart(std::numeric_limits<std::size_t>::max(), s), 50u);
}

TEST(Schedule, Validation) {
    a3::OsdSchedule s;
    s.phi = 0.95;
    EXPECT_THROW(s.validate(), a3::ValidationError);
    s = {};
    s.gamma = 0;
    EXPECT_THROW(s.validate(), a3::ValidationError);
}

std::vector<a3::ImageState<float>> states_with_losses(const std::vector<double>& losses) {
    std::vector<a3::ImageState<float>> s(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        s[i].image_id = i;
        s[i].best_loss = losses[i];
    }
    return s;
}

TEST(WorkingSet, ZeroRateKeepsAll) {
    auto s = states_with_losses({-3, -1, -2});
    EXPECT_EQ(a3::select_working_set<float>(s, 0.0), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(WorkingSet, KeepsHighestLosses) {
    auto s = states_with_losses({-10, -9, -8, -7, -6, -5, -4, -3, -2, -1});
    EXPECT_EQ(a3::select_working_set<float>(s, 0.5), (std::vector<std::size_t>{5, 6, 7, 8, 9}));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(s[i].status, a3::ImageStatus::Discarded);
}

TEST(WorkingSet, TiesKeepLowerIds) {
    auto s = states_with_losses({1, 1, 1, 1});
    EXPECT_EQ(a3::select_working_set<float>(s, 0.5), (std::vector<std::size_t>{0, 1}));
}

TEST(WorkingSet, OnlyPendingCompeteAndAtLeastOneKept) {
    auto s = states_with_losses({5, -1, -2, -3});
    s[0].status = a3::ImageStatus::Succeeded;
    EXPECT_EQ(a3::select_working_set<float>(s, 0.97), (std::vector<std::size_t>{1}));
    EXPECT_EQ(s[0].status, a3::ImageStatus::Succeeded);
    // Discarded is absorbing.
    EXPECT_EQ(a3::select_working_set<float>(s, 0.0), (std::vector<std::size_t>{1}));
    EXPECT_THROW(a3::select_working_set<float>(s, 1.0), a3::ValidationError);
}

TEST(WorkingSet, CeilingWithRepresentationError) {
    auto s = states_with_losses(std::vector<double>(10, 0.0));
    EXPECT_EQ(a3::select_working_set<float>(s, 0.7).size(), 3u);
}

TEST(Budget, ChargeAccumulates) {
    a3::BudgetCounter c;
    c = a3::charge(c, 7, 7);
    EXPECT_EQ(c, (a3::BudgetCounter{7, 7}));
    c = a3::charge(c, 25, 25);
    EXPECT_EQ(c, (a3::BudgetCounter{32, 32}));
    EXPECT_EQ(a3::charge({}, 100, 0), (a3::BudgetCounter{100, 0}));
}

TEST(Budget, OverflowAndOrderingAreFatal) {
    const auto max = std::numeric_limits<std::uint64_t>::max();
    EXPECT_THROW(a3::charge({max, 0}, 1, 0), a3::AccountingError);
    EXPECT_THROW(a3::charge({}, 1, 2), a3::AccountingError);
}

}  // namespace
