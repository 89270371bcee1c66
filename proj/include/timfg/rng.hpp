#pragma once

#include <cmath>
#include <cstdint>

namespace timfg {

/// Counter-based random stream: the k-th output is a pure function of
/// (seed, stream_id, k), so any particle's draws can be produced on any
/// worker thread with no shared state and no order dependence.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream_id)
        : base_(mix(mix(seed + 0x9e3779b97f4a7c15ull) ^ mix(stream_id + 0xbf58476d1ce4e5b9ull))) {}

    /// k-th raw 64-bit word of the stream.
    [[nodiscard]] std::uint64_t word(std::uint64_t k) const {
        return mix(base_ + k * 0x9e3779b97f4a7c15ull);
    }

    /// Uniform draw in (0,1], never exactly 0.
    [[nodiscard]] double uniform(std::uint64_t k) const {
        const std::uint64_t w = word(k);
        return (static_cast<double>(w >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on draws (2k, 2k+1).
    [[nodiscard]] double normal(std::uint64_t k) const {
        const double u1 = uniform(2 * k);
        const double u2 = uniform(2 * k + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t base_;
};

} // namespace timfg
