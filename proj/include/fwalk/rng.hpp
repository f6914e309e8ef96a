#pragma once

#include <cstdint>
#include <cmath>

#include "fwalk/core.hpp"

namespace fwalk {

// SplitMix64 (Steele, Lea & Flood 2014). The state walks the golden-gamma
// orbit and every output is a bijective mix of the state, so stream position
// i yields mix(seed + (i+1)*GAMMA): a counter-based generator with O(1) seek,
// no warm-up, and full 64-bit period. Chosen over std::mt19937_64 because
// trajectories must reproduce byte-identically from a (master seed, run
// index) pair and the mixing function is small enough to audit.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Independent stream for one run of an experiment. Injective in
    // run_index for a fixed master seed: idx*GAMMA is a bijection mod 2^64,
    // adding the mixed master is a shift, and mix() is itself bijective.
    static Rng stream(std::uint64_t master_seed, std::uint64_t run_index) {
        return Rng(mix(mix(master_seed) + run_index * GAMMA));
    }

    std::uint64_t next() {
        state_ += GAMMA;
        return mix(state_);
    }

    // Uniform on (0,1]; never 0, so -log stays finite.
    double uniform01() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform on [0, n). Rejection on the top of the range kills modulo bias.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ValidationError("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    double exponential(double rate) {
        if (!(rate > 0.0)) throw ValidationError("Rng::exponential: rate must be positive");
        return -std::log(uniform01()) / rate;
    }

    // Box-Muller; the spare is cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = uniform01();
        double v = uniform01();
        double r = std::sqrt(-2.0 * std::log(u));
        double a = 6.283185307179586476925286766559 * v;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    static constexpr std::uint64_t GAMMA = 0x9E3779B97F4A7C15ull;

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace fwalk
