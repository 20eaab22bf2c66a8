#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace asianlsv {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011). Stateless:
// each 128-bit counter block maps to four 32-bit words under a 64-bit key,
// which makes per-path substreams trivially reproducible and independent of
// the thread schedule.
struct Philox4x32 {
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
            const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
            const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
            const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

// One pair of independent standard normals for (seed, path, step), via
// Box-Muller on two 53-bit uniforms assembled from one Philox block.
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t path,
                                         std::uint32_t step) {
    const std::array<std::uint32_t, 2> key{std::uint32_t(seed), std::uint32_t(seed >> 32)};
    const std::array<std::uint32_t, 4> ctr{step, std::uint32_t(path), std::uint32_t(path >> 32),
                                           0x41534e4fu};
    const auto r = Philox4x32::block(ctr, key);
    const std::uint64_t a = (std::uint64_t(r[0]) << 32) | r[1];
    const std::uint64_t b = (std::uint64_t(r[2]) << 32) | r[3];
    // (n + 0.5) * 2^-53 keeps both uniforms strictly inside (0, 1).
    const double u1 = (double(a >> 11) + 0.5) * 0x1p-53;
    const double u2 = (double(b >> 11) + 0.5) * 0x1p-53;
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
}

}  // namespace asianlsv
