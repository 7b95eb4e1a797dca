#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace glosskit {

// Deterministic random source. std::mt19937_64 is specified bit-exactly by
// the standard; the derived draws below avoid std::*_distribution, whose
// algorithms are implementation-defined, so identical seeds give identical
// streams on any platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller. The spare value is kept so consecutive
    // draws stay cheap; the stream is still a pure function of the seed.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Normal(0, stddev) truncated to +/- 2 standard deviations, by rejection.
    double truncated_normal(double stddev) {
        double z = 0.0;
        do {
            z = normal();
        } while (z < -2.0 || z > 2.0);
        return z * stddev;
    }

    // Derive an independent child stream; used to give each pipeline stage
    // its own seed so adding draws to one stage does not shift the others.
    std::uint64_t fork_seed(std::uint64_t salt) {
        std::uint64_t x = engine_() ^ (salt * 0x9e3779b97f4a7c15ull);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return x;
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace glosskit
