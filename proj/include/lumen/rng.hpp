#pragma once

#include <cstdint>

namespace lumen {

// SplitMix64 finalizer. Used to key independent RNG streams from
// (seed, counter) tuples so results never depend on thread scheduling.
inline constexpr uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline constexpr uint64_t hash_combine(uint64_t a, uint64_t b) {
    return mix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// PCG32 (O'Neill). Small, fast, reproducible across platforms.
class Pcg32 {
public:
    Pcg32() { seed(0x853c49e6748fea9bull, 0xda3e39cb94b95bdbull); }
    explicit Pcg32(uint64_t initstate, uint64_t initseq = 1) { seed(initstate, initseq); }

    void seed(uint64_t initstate, uint64_t initseq = 1) {
        state_ = 0u;
        inc_ = (initseq << 1u) | 1u;
        next_u32();
        state_ += initstate;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ull + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31));
    }

    // Unbiased bounded draw (rejection on the low remainder).
    uint32_t next_below(uint32_t bound) {
        uint32_t threshold = (~bound + 1u) % bound;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform in [0, 1).
    double next_double() {
        uint64_t hi = next_u32();
        uint64_t lo = next_u32();
        uint64_t bits = ((hi << 32) | lo) >> 12;
        return static_cast<double>(bits) * 0x1p-52;
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 0;
};

// Stream keyed by an arbitrary tuple of identifiers; identical keys give
// identical sequences regardless of which thread asks.
inline Pcg32 keyed_rng(uint64_t seed, uint64_t k1, uint64_t k2 = 0, uint64_t k3 = 0) {
    uint64_t s = hash_combine(hash_combine(hash_combine(seed, k1), k2), k3);
    return Pcg32(s, mix64(s));
}

} // namespace lumen
