#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace tilq {

// Philox4x32-10 (Salmon et al., SC'11). Stateless: each 128-bit counter plus
// 64-bit key maps to four independent 32-bit words, so any (path, step) draw
// is reproducible in isolation and the ensemble can be partitioned across
// workers without coordination.
namespace philox {

constexpr uint32_t kW32A = 0x9E3779B9u;
constexpr uint32_t kW32B = 0xBB67AE85u;
constexpr uint32_t kM4x32A = 0xD2511F53u;
constexpr uint32_t kM4x32B = 0xCD9E8D57u;

inline void round_once(std::array<uint32_t, 4>& ctr, uint32_t k0, uint32_t k1) {
    uint64_t p0 = static_cast<uint64_t>(kM4x32A) * ctr[0];
    uint64_t p1 = static_cast<uint64_t>(kM4x32B) * ctr[2];
    uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

inline std::array<uint32_t, 4> block(uint64_t key, uint64_t path, uint32_t step,
                                     uint32_t slot) {
    std::array<uint32_t, 4> ctr = {slot, step, static_cast<uint32_t>(path),
                                   static_cast<uint32_t>(path >> 32)};
    uint32_t k0 = static_cast<uint32_t>(key);
    uint32_t k1 = static_cast<uint32_t>(key >> 32);
    for (int r = 0; r < 10; ++r) {
        round_once(ctr, k0, k1);
        k0 += kW32A;
        k1 += kW32B;
    }
    return ctr;
}

}  // namespace philox

/// Derives an independent stream key (splitmix64 finalizer); used for the
/// inner ensembles of nested conditional estimates.
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Deterministic normal draws keyed by (seed, path, step, index). Two normals
/// per Philox block via Box-Muller; uniforms are strictly inside (0, 1).
class CounterRng {
public:
    explicit CounterRng(uint64_t seed) : seed_(seed) {}

    /// z[i] for i in [0, n): the i-th N(0,1) draw of the given (path, step).
    void normals(uint64_t path, uint32_t step, int n, double* z) const {
        for (int i = 0; i < n; i += 2) {
            auto w = philox::block(seed_, path, step, static_cast<uint32_t>(i / 2));
            double u1 = to_unit(w[0], w[1]);
            double u2 = to_unit(w[2], w[3]);
            double r = std::sqrt(-2.0 * std::log(u1));
            double a = 2.0 * M_PI * u2;
            if (i + 1 < n) {
#if defined(__GNUC__)
                double sn, cs;
                __builtin_sincos(a, &sn, &cs);
                z[i] = r * cs;
                z[i + 1] = r * sn;
#else
                z[i] = r * std::cos(a);
                z[i + 1] = r * std::sin(a);
#endif
            } else {
                z[i] = r * std::cos(a);
            }
        }
    }

    uint64_t seed() const { return seed_; }

private:
    static double to_unit(uint32_t hi, uint32_t lo) {
        uint64_t u = (static_cast<uint64_t>(hi) << 32) | lo;
        // 53-bit mantissa, offset by half an ulp: never returns 0 or 1.
        return static_cast<double>(u >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    uint64_t seed_;
};

}  // namespace tilq
