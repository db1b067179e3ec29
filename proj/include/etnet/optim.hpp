#pragma once

#include <vector>

#include "etnet/autodiff.hpp"

namespace etnet {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected Adam. Moment buffers are positional: entry i belongs to the
// i-th param of the set the state was built for.
struct AdamState {
    AdamConfig config;
    long step_count = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;

    AdamState() = default;
    AdamState(const ParamSet& ps, AdamConfig cfg);
};

// Applies one update from the gradients currently held in each Param.
void adam_step(const ParamSet& params, AdamState& state);

} // namespace etnet
