#pragma once

#include <cstdint>

namespace diffisp {

// splitmix64 step (Steele, Lea, Flood 2014). Used for seeding and for
// deriving independent per-item streams from a master seed.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// xoshiro256** (Blackman & Vigna 2018), seeded through splitmix64.
// Deterministic and portable: the same seed yields the same sequence on
// every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (uint64_t& word : s_) word = splitmix64(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform integer in [lo, hi], both inclusive. Rejection sampling, so
    // there is no modulo bias.
    int64_t randint(int64_t lo, int64_t hi) {
        const uint64_t n = static_cast<uint64_t>(hi - lo) + 1;
        const uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return lo + static_cast<int64_t>(r % n);
        }
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

// Stream seed for item `index` under `master`. Distinct indices give
// uncorrelated streams; used so corpus generation parallelizes per image
// without changing its output.
inline uint64_t child_seed(uint64_t master, uint64_t index) {
    uint64_t sm = master ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    return splitmix64(sm);
}

}  // namespace diffisp
