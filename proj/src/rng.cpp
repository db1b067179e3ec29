#include "etnet/rng.hpp"

#include <cmath>

namespace etnet {

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller on (0,1] x [0,1): u1 must be nonzero for the log.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // One splitmix64 scramble of the pair; cheap and collision-safe enough
    // for the handful of streams we derive.
    Rng mix(seed ^ (0xA0761D6478BD642FULL * (stream + 1)));
    return mix.next_u64();
}

} // namespace etnet
