#include "etnet/optim.hpp"

#include <cmath>

namespace etnet {

AdamState::AdamState(const ParamSet& ps, AdamConfig cfg) : config(cfg) {
    m.reserve(ps.items().size());
    v.reserve(ps.items().size());
    for (const Param* p : ps.items()) {
        m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
}

void adam_step(const ParamSet& params, AdamState& state) {
    const auto& items = params.items();
    require(items.size() == state.m.size(), "shape",
            "adam_step: state built for a different parameter set");
    state.step_count += 1;
    double b1t = 1.0 - std::pow(state.config.beta1, static_cast<double>(state.step_count));
    double b2t = 1.0 - std::pow(state.config.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < items.size(); ++i) {
        Param& p = *items[i];
        require(p.grad.rows() == state.m[i].rows() && p.grad.cols() == state.m[i].cols(),
                "shape", "adam_step: gradient shape mismatch for '" + p.name + "'");
        state.m[i] = state.config.beta1 * state.m[i] + (1.0 - state.config.beta1) * p.grad;
        state.v[i] = state.config.beta2 * state.v[i] +
                     (1.0 - state.config.beta2) * p.grad.cwiseProduct(p.grad);
        Matrix mhat = state.m[i] / b1t;
        Matrix vhat = state.v[i] / b2t;
        p.value -=
            state.config.learning_rate *
            mhat.cwiseQuotient((vhat.cwiseSqrt().array() + state.config.epsilon).matrix());
    }
}

} // namespace etnet
