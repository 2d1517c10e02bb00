#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mit {

/// Deterministic, platform-independent pseudo-random generator (splitmix64).
/// Every stochastic piece of the pipeline (noise, init, shuffles, splits)
/// draws from one of these so that runs are reproducible bit-for-bit from a
/// single master seed. std:: distributions are avoided on purpose: their
/// output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller (cosine branch only).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Rayleigh-distributed magnitude with the given scale parameter.
    double rayleigh(double scale) {
        const double u = 1.0 - uniform();
        return scale * std::sqrt(-2.0 * std::log(u));
    }

    /// Fisher-Yates shuffle with this generator (std::shuffle is
    /// implementation-defined).
    template <typename RandomIt>
    void shuffle(RandomIt first, RandomIt last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = uniform_int(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    /// Derives an independent stream; used for per-sample seeding so that
    /// generation order (or worker count) cannot change the data.
    Rng fork(std::uint64_t salt) const {
        Rng r(state_ ^ (0x632be59bd9b4e019ULL + salt * 0x9e3779b97f4a7c15ULL));
        r.next_u64();
        return r;
    }

private:
    std::uint64_t state_;
};

/// Order-independent seed derivation for sample (shape, position, repetition)
/// tuples.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
    Rng r(master);
    return r.fork(a).fork(b).fork(c).next_u64();
}

}  // namespace mit
