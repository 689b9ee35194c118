#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

namespace driftmon {

// Seedable, portable 64-bit RNG (xoshiro256++ seeded through splitmix64).
//
// Why not <random>: the standard distributions are not bit-reproducible
// across implementations, and the artifact's determinism contract is
// byte-identical output for identical configs on any platform. Everything
// here is integer arithmetic plus explicitly specified float mappings.
//
// Stream splitting: substream(id) derives an independent generator from the
// parent's seed and a caller-chosen stream id. Substream ids are part of the
// public behavior (documented at each call site) so that, e.g., the stream
// generator's Bernoulli draws never alias the confidence-noise draws, and
// changing a detector can never perturb a generated stream.

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64_next(sm);
    }

    // Independent generator derived from (parent seed, stream id).
    // Distinct ids give streams with unrelated splitmix64-mixed seeds.
    Rng substream(std::uint64_t stream_id) const {
        std::uint64_t sm = seed_ ^ (0xA0761D6478BD642FULL + stream_id);
        std::uint64_t derived = splitmix64_next(sm);
        derived ^= splitmix64_next(sm);
        return Rng(derived);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        const std::uint64_t result =
            rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; one pair per two calls, cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        // u1 in (0,1] so log() is finite.
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer in [0, n) by rejection on the top bits.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Fisher-Yates; deterministic given generator state.
    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace driftmon
