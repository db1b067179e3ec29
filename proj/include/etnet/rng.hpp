#pragma once

#include <cstdint>

namespace etnet {

// Deterministic generator used everywhere randomness is needed.
//
// Reproducibility across runs and platforms is a hard requirement (identical
// seed + config + data must give byte-identical models), so we do not use
// std::mt19937 / std::normal_distribution: their outputs are not pinned by
// the standard for floating point. The core is splitmix64, which is tiny,
// well studied, and has a fixed integer semantics we can rely on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Inclusive integer range.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Modulo bias is ~n/2^64, irrelevant for the index ranges used here.
        return next_u64() % n;
    }

    // Standard normal via Box-Muller; the second deviate is cached.
    double gaussian();

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derives an independent child seed from (seed, stream). Used to give each
// branch / ensemble member / data item its own stream so that reordering one
// consumer cannot perturb another.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace etnet
