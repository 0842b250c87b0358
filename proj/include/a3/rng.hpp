#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace a3 {

/// SplitMix64 output function. Bijective on 64-bit words.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator, but the
/// distributions below are implemented here so draws are identical across
/// standard libraries.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    constexpr explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return splitmix64_mix(state_);
    }

    /// U[0,1) from the top 53 bits.
    double uniform01() noexcept { return double((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Multiply-shift on the top 32 bits; n must be < 2^32.
    std::uint64_t below(std::uint64_t n) noexcept { return (((*this)() >> 32) * n) >> 32; }

    bool coin() noexcept { return ((*this)() >> 63) != 0; }

    /// Standard normal via Box-Muller (one value per call, the sine branch is dropped).
    double normal() noexcept {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

/// Independent draws are keyed by purpose so adding a consumer never shifts
/// another consumer's stream.
enum class StreamTag : std::uint64_t {
    InputStart = 1,
    Direction = 2,
    AdaptiveDirection = 3,
    OdiFallback = 4,
};

/// Per-(image, restart, purpose) generator. Depends only on its arguments,
/// never on worker count or scheduling.
inline SplitMix64 derive_substream(std::uint64_t seed, std::uint64_t image_id, std::uint64_t restart,
                                   std::uint64_t stream_tag) noexcept {
    const std::uint64_t key = seed ^ (image_id * 0x9E3779B97F4A7C15ULL) ^ (restart << 32) ^ stream_tag;
    return SplitMix64(splitmix64_mix(key));
}

inline SplitMix64 derive_substream(std::uint64_t seed, std::uint64_t image_id, std::uint64_t restart,
                                   StreamTag tag) noexcept {
    return derive_substream(seed, image_id, restart, static_cast<std::uint64_t>(tag));
}

}  // namespace a3
