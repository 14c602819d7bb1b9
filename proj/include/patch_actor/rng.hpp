#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace patch_actor {

/// splitmix64 finalizer: bijective avalanche of a 64-bit word.
inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed plus a stream tag so
/// that e.g. per-screen noise never aliases the placement stream. The base
/// is avalanched before the tag is mixed in, so small (base, tag) pairs,
/// the common case, cannot collide by simple arithmetic.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
    return splitmix64(splitmix64(base) ^ (tag + 0x9e3779b97f4a7c15ULL));
}

/// Seeded generator with hand-rolled draws. Distributions are written out
/// here instead of using std:: distribution objects so sequences are pinned
/// by this file, not by the standard library vendor.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive, rejection-sampled (unbiased).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(gen_()); // full range
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % span);
    }

    /// Standard normal via Box-Muller; the sine branch is discarded to keep
    /// the generator stateless between calls.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = last - first;
        for (auto i = n - 1; i > 0; --i) {
            const auto j = uniform_int(0, i);
            std::swap(first[i], first[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

} // namespace patch_actor
