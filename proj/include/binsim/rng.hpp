// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace binsim {

// Deterministic generator with an explicit draw counter so a search can be
// checkpointed as (seed, draw_count) and replayed bit-identically.
//
// Every helper consumes a fixed number of raw engine steps: bounded ints and
// unit reals take one, normals take two. Do not mix in std::*_distribution,
// whose consumption is implementation-defined.
class CountingRng {
public:
    explicit CountingRng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draw_count() const { return draws_; }

    // Restores the stream position after re-seeding (checkpoint resume).
    void discard(std::uint64_t n) {
        engine_.discard(n);
        draws_ += n;
    }

    std::uint64_t next_u64() {
        ++draws_;
        return engine_();
    }

    // Uniform integer in [0, n). Uses the fixed-point multiply reduction; the
    // bias is below 2^-32 for any n that fits this project.
    std::uint32_t uniform_int(std::uint32_t n) {
        return static_cast<std::uint32_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Uniform real in [0, 1) with 53 random bits.
    double uniform_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform real in [lo, hi).
    double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

    // Standard normal via Box-Muller; always two draws, no caching.
    double normal() {
        double u1 = uniform_real();
        double u2 = uniform_real();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_ = 0;
    std::uint64_t draws_ = 0;
};

// Cheap stream splitter: derives an independent seed for a sub-task (e.g. the
// trainer run of one genome) without touching the parent stream.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

}  // namespace binsim
