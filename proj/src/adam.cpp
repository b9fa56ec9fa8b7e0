#include "inflow/adam.hpp"

#include <cmath>

namespace inflow {

AdamState::AdamState(const Shape& shape, AdamConfig cfg)
    : config(cfg), first_moment(shape, 0.0), second_moment(shape, 0.0) {
    if (!(cfg.lr > 0.0)) throw ContractError("Adam learning rate must be positive");
}

void adam_step(AdamState& state, Tensor& param, const Tensor& grad) {
    if (param.shape() != grad.shape() || param.shape() != state.first_moment.shape())
        throw DimensionError("adam_step shape mismatch: param " + shape_string(param.shape()) + ", grad " +
                             shape_string(grad.shape()) + ", state " + shape_string(state.first_moment.shape()));
    if (!grad.all_finite()) throw NumericError("adam_step refused: gradient has non-finite values");

    const auto& c = state.config;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    auto m = state.first_moment.data();
    auto v = state.second_moment.data();
    auto p = param.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = grad[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

}  // namespace inflow
