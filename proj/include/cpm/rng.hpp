#pragma once

// Counter-based random numbers: Philox4x64-10 keyed by (seed, stream), with
// the counter carrying (step, slot). Every draw is a pure function of
// (seed, stream, step, slot), so trajectories may be generated on any number
// of threads, in any order, with identical results.

#include <array>
#include <cmath>
#include <cstdint>

namespace cpm {

struct Philox4x64 {
    static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
    static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
    static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
    static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

    static std::array<std::uint64_t, 4> block(std::array<std::uint64_t, 4> ctr,
                                              std::array<std::uint64_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const unsigned __int128 p0 = static_cast<unsigned __int128>(kMul0) * ctr[0];
            const unsigned __int128 p1 = static_cast<unsigned __int128>(kMul1) * ctr[2];
            const std::uint64_t hi0 = static_cast<std::uint64_t>(p0 >> 64);
            const std::uint64_t lo0 = static_cast<std::uint64_t>(p0);
            const std::uint64_t hi1 = static_cast<std::uint64_t>(p1 >> 64);
            const std::uint64_t lo1 = static_cast<std::uint64_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

namespace rng_detail {
// (0, 1]: never 0, so it is safe under log().
inline double to_unit_positive(std::uint64_t u) { return (static_cast<double>(u >> 11) + 1.0) * 0x1.0p-53; }
// [0, 1)
inline double to_unit(std::uint64_t u) { return static_cast<double>(u >> 11) * 0x1.0p-53; }
} // namespace rng_detail

// Two independent standard normal deviates for (seed, stream, step, slot),
// via one Philox block and the Box-Muller transform.
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                                         std::uint64_t slot = 0) {
    const auto words = Philox4x64::block({step, slot, 0, 0}, {seed, stream});
    const double u0 = rng_detail::to_unit_positive(words[0]);
    const double u1 = rng_detail::to_unit(words[1]);
    const double rad = std::sqrt(-2.0 * std::log(u0));
    constexpr double two_pi = 6.283185307179586476925287;
    return {rad * std::cos(two_pi * u1), rad * std::sin(two_pi * u1)};
}

} // namespace cpm
