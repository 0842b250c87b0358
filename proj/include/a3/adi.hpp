#pragma once

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "a3/attack.hpp"
#include "a3/errors.hpp"
#include "a3/format.hpp"
#include "a3/rng.hpp"

namespace a3 {

/// A diversification direction that led to a successful adversarial example.
struct DirectionRecord {
    std::size_t image_id = 0;
    std::size_t label = 0;
    std::size_t predicted = 0;
    Direction w;
};

/// Observed successful directions plus their running per-class sums.
class DirectionSet {
public:
    DirectionSet() = default;
    explicit DirectionSet(std::size_t num_classes) : sums_(num_classes, 0.0) {}

    std::size_t num_classes() const noexcept { return sums_.size(); }
    const std::vector<DirectionRecord>& entries() const noexcept { return entries_; }
    const std::vector<double>& sums() const noexcept { return sums_; }
    bool empty() const noexcept { return entries_.empty(); }

    void record(DirectionRecord r) {
        if (r.w.size() != sums_.size())
            throw DimensionError("direction has " + std::to_string(r.w.size()) + " components, set expects " +
                                 std::to_string(sums_.size()));
        if (r.predicted == r.label) throw ValidationError("only successful directions may be recorded");
        for (std::size_t c = 0; c < sums_.size(); ++c) sums_[c] += r.w[c];
        entries_.push_back(std::move(r));
    }

    /// Appends every entry of `other` in order.
    void merge(const DirectionSet& other) {
        for (const auto& e : other.entries_) record(e);
    }

private:
    std::vector<DirectionRecord> entries_;
    std::vector<double> sums_;
};

inline DirectionSet record_direction(DirectionSet set, const Direction& w, std::size_t label, std::size_t predicted,
                                     std::size_t image_id = 0) {
    set.record({image_id, label, predicted, w});
    return set;
}

/// Componentwise sign prior of the summed successful directions.
struct Kappa {
    std::vector<int> k;
    bool available = false;
};

inline Kappa kappa(const DirectionSet& set) {
    Kappa out{std::vector<int>(set.num_classes(), 0), !set.empty()};
    for (std::size_t c = 0; c < set.num_classes(); ++c) {
        const double s = set.sums()[c];
        out.k[c] = s > 0.0 ? 1 : (s < 0.0 ? -1 : 0);
    }
    return out;
}

struct AdiParams {
    double partner_magnitude = 0.8;
};

struct AdaptiveDirection {
    Direction w;
    std::size_t partner = 0;      // class whose component follows its kappa sign
    bool uniform_fallback = false;  // set when C < 3 or kappa is unavailable
};

/// Draws w_a for an image of class y:
///   y-th component   ~ U(-0.5, 0.1) if kappa_y < 0, U(-0.1, 0.5) if > 0, U(-0.5, 0.5) if 0
///   partner (random class != y) = +/-magnitude following kappa, fair coin when 0
///   every other component ~ U(-1, 1)
inline AdaptiveDirection generate_adaptive_direction(const Kappa& kap, std::size_t y, SplitMix64& rng,
                                                     const AdiParams& params = {}) {
    const std::size_t C = kap.k.size();
    if (y >= C && C > 0) throw ValidationError("label out of range for kappa");
    if (C < 3 || !kap.available) return {uniform_direction(C, rng), 0, true};

    Direction w(C, 0.0);
    const int ky = kap.k[y];
    if (ky < 0)
        w[y] = rng.uniform(-0.5, 0.1);
    else if (ky > 0)
        w[y] = rng.uniform(-0.1, 0.5);
    else
        w[y] = rng.uniform(-0.5, 0.5);

    std::size_t partner = std::size_t(rng.below(C - 1));
    if (partner >= y) ++partner;
    const int kp = kap.k[partner];
    const bool positive = kp > 0 || (kp == 0 && rng.coin());
    w[partner] = positive ? params.partner_magnitude : -params.partner_magnitude;

    for (std::size_t c = 0; c < C; ++c)
        if (c != y && c != partner) w[c] = rng.uniform(-1.0, 1.0);
    return {std::move(w), partner, false};
}

/// One row per entry: image_id,y,predicted,w_0..w_{C-1}.
inline std::string direction_set_csv(const DirectionSet& set) {
    std::ostringstream os;
    os << "image_id,y,predicted";
    for (std::size_t c = 0; c < set.num_classes(); ++c) os << ",w" << c;
    os << "\n";
    for (const auto& e : set.entries()) {
        os << e.image_id << "," << e.label << "," << e.predicted;
        for (double v : e.w) os << "," << format_number(v);
        os << "\n";
    }
    return os.str();
}

}  // namespace a3
