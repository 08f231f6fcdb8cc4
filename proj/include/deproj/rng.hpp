#pragma once

#include <cstdint>

// Deterministic pseudorandom streams built on splitmix64 (64-bit state,
// Steele/Lea/Flood mixing constants). Every consumer derives its own
// stream from (seed, purpose, index), so results do not depend on the
// order in which independent units of work run.

namespace deproj {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float next_unit_f() { return static_cast<float>(next_unit()); }

    double uniform(double lo, double hi) { return lo + next_unit() * (hi - lo); }

    // Inclusive integer range; rejection keeps the draw unbiased.
    int next_int(int lo, int hi);

    // Standard normal via the Marsaglia polar method (no trig calls).
    double next_gaussian();

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

enum class Stream : std::uint64_t {
    data = 1,
    init = 2,
    noise = 3,
    shuffle = 4,
    eval = 5,
    sample = 6,
    pairs = 7,
};

// Derives an independent stream for (seed, purpose, index).
Rng stream_rng(std::uint64_t seed, Stream purpose, std::uint64_t index = 0);

} // namespace deproj
