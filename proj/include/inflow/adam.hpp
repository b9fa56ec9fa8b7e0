#pragma once

#include <cstdint>

#include "inflow/tensor.hpp"

namespace inflow {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment estimates for one parameter tensor.
struct AdamState {
    AdamState(const Shape& shape, AdamConfig config);

    AdamConfig config;
    Tensor first_moment;
    Tensor second_moment;
    std::uint64_t step_count = 0;
};

/// Bias-corrected Adam update. A non-finite gradient throws NumericError and
/// leaves both the parameter and the state untouched.
void adam_step(AdamState& state, Tensor& param, const Tensor& grad);

}  // namespace inflow
