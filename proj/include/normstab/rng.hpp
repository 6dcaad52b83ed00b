#pragma once

#include <cstdint>
#include <cmath>

namespace normstab {

// Counter-based deterministic generator built on splitmix64.
// The draw at counter c for seed s is mix(s + (c+1) * 0x9E3779B97F4B7C15),
// so streams are reproducible and cheap to fork. Test vectors live in
// tests/test_rng.cpp and in the README.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4B7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Box-Muller; consumes two draws per call, no caching so the
    // counter-to-value mapping stays position independent.
    double gaussian(double mean = 0.0, double stddev = 1.0) {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [0, n), n > 0. Modulo bias is < 2^-53 for the
    // sizes used here (corpus offsets, marker positions).
    std::uint64_t next_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(next_double() * static_cast<double>(n));
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

    // Independent stream derived from this seed, e.g. one per epoch.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        Rng mix(seed ^ (0xA0761D6478BD642FULL * (stream + 1)));
        return mix;
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

} // namespace normstab
