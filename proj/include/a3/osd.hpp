#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "a3/attack.hpp"
#include "a3/errors.hpp"
#include "a3/tensor.hpp"

namespace a3 {

/// Discard-rate and iteration schedules for online statistics-based discarding.
struct OsdSchedule {
    double phi = 0.0;            // initial discard rate
    double iota = 0.1;           // linear increment
    double phase2_iota = 0.035;  // increment once the linear phase would pass cap1
    double cap1 = 0.9;
    double cap2 = 0.97;
    std::size_t gamma = 25;  // iterations at restart 0
    std::size_t nu = 5;      // iteration increment per restart
    std::size_t iter_cap = 50;

    void validate() const {
        if (!(phi >= 0.0 && phi <= cap1 && cap1 <= cap2 && cap2 < 1.0))
            throw ValidationError("OSD schedule needs 0 <= phi <= cap1 <= cap2 < 1");
        if (!(iota >= 0.0) || !(phase2_iota >= 0.0)) throw ValidationError("OSD increments must be non-negative");
        if (gamma < 1) throw ValidationError("gamma must be at least 1");
    }
};

namespace detail {
// Schedule values are snapped to a 1e-9 grid so that decimal schedules such as
// 0.1, 0.2, ... come out as the nearest doubles to those decimals.
inline double snap_rate(double v) { return std::round(v * 1e9) / 1e9; }
}  // namespace detail

/// Discard rate at restart r: phi + r*iota while that stays <= cap1; from the
/// first restart where it would exceed cap1, cap1 + k*phase2_iota (k = 1, 2, ...)
/// capped at cap2.
inline double discard_rate(std::size_t r, const OsdSchedule& s) {
    const auto linear = [&](std::size_t k) { return detail::snap_rate(s.phi + double(k) * s.iota); };
    if (s.iota == 0.0) return detail::snap_rate(s.phi);
    // First restart whose linear value exceeds cap1.
    std::size_t first_over = std::size_t(std::max(0.0, std::floor((s.cap1 - s.phi) / s.iota)));
    while (first_over > 0 && linear(first_over - 1) > s.cap1) --first_over;
    while (linear(first_over) <= s.cap1) ++first_over;
    if (r < first_over) return linear(r);
    const double v = detail::snap_rate(s.cap1 + double(r - first_over + 1) * s.phase2_iota);
    return std::min(v, s.cap2);
}

/// Attack iterations at restart r: min(gamma + r*nu, iter_cap), saturating.
inline std::size_t iters_for_restart(std::size_t r, const OsdSchedule& s) {
    if (s.nu != 0 && r > (std::numeric_limits<std::size_t>::max() - s.gamma) / s.nu) return s.iter_cap;
    return std::min(s.gamma + r * s.nu, s.iter_cap);
}

/// Forward/backward evaluation totals.
struct BudgetCounter {
    std::uint64_t forwards = 0;
    std::uint64_t backwards = 0;

    friend bool operator==(const BudgetCounter&, const BudgetCounter&) = default;
};

inline BudgetCounter charge(BudgetCounter c, std::uint64_t forwards, std::uint64_t backwards) {
    constexpr auto max = std::numeric_limits<std::uint64_t>::max();
    if (c.forwards > max - forwards || c.backwards > max - backwards)
        throw AccountingError("budget counter overflow");
    c.forwards += forwards;
    c.backwards += backwards;
    if (c.backwards > c.forwards) throw AccountingError("more backward than forward passes charged");
    return c;
}

enum class ImageStatus { Pending, Succeeded, Discarded, CleanMisclassified };

inline const char* to_string(ImageStatus s) {
    switch (s) {
        case ImageStatus::Pending: return "pending";
        case ImageStatus::Succeeded: return "succeeded";
        case ImageStatus::Discarded: return "discarded";
        case ImageStatus::CleanMisclassified: return "clean_misclassified";
    }
    return "?";
}

/// Per-image attack bookkeeping.
template <typename T>
struct ImageState {
    std::size_t image_id = 0;
    std::size_t label = 0;
    Tensor<T> x_orig;
    ImageStatus status = ImageStatus::Pending;
    double best_loss = -std::numeric_limits<double>::infinity();  // max margin seen so far
    Tensor<T> best_candidate;
    std::size_t best_prediction = 0;
    Direction w_d_used;
    std::vector<T> clean_logits;

    std::size_t restarts_attacked = 0;
    std::uint64_t iterations_spent = 0;   // backward passes charged to this image
    std::uint64_t forwards_spent = 0;     // forward passes charged to this image (excluding the clean pass)
    std::uint64_t verification_forwards = 0;
    double final_margin = std::numeric_limits<double>::quiet_NaN();
    std::size_t succeeded_restart = 0;
};

/// Keeps the ceil((1 - rate) * n_pending) Pending images with the largest
/// best_loss (lower image_id first on ties) and marks the rest Discarded.
/// Returns the kept image ids in ascending id order.
template <typename T>
std::vector<std::size_t> select_working_set(std::span<ImageState<T>> states, double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("discard rate must lie in [0, 1)");
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < states.size(); ++i)
        if (states[i].status == ImageStatus::Pending) pending.push_back(i);
    const std::size_t n = pending.size();
    if (n == 0) return {};
    // The small slack absorbs representation error such as (1 - 0.7) * 10 = 3.0000000000000004.
    std::size_t keep = std::size_t(std::ceil((1.0 - rate) * double(n) - 1e-9));
    keep = std::clamp<std::size_t>(keep, 1, n);
    std::stable_sort(pending.begin(), pending.end(), [&](std::size_t a, std::size_t b) {
        if (states[a].best_loss != states[b].best_loss) return states[a].best_loss > states[b].best_loss;
        return states[a].image_id < states[b].image_id;
    });
    for (std::size_t k = keep; k < n; ++k) states[pending[k]].status = ImageStatus::Discarded;
    std::vector<std::size_t> kept;
    kept.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) kept.push_back(states[pending[k]].image_id);
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace a3
