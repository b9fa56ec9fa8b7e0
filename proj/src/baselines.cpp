#include "inflow/baselines.hpp"

namespace inflow {

using ad::Tape;
using ad::Var;

RevInTransform::RevInTransform(std::size_t variates, bool affine, double eps)
    : log_scale{"phi/revin/log_scale", Tensor({variates})},
      shift{"phi/revin/shift", Tensor({variates})},
      affine_(affine),
      eps_(eps) {
    if (!(eps > 0.0)) throw ContractError("RevIN eps must be positive");
}

Var RevInTransform::forward(Tape& tape, Var x) {
    const Shape& s = x.shape();
    if (s.size() != 3 || s[2] != log_scale.value.size())
        throw DimensionError("RevIN expects [batch, L, " + std::to_string(log_scale.value.size()) + "], got " +
                             shape_string(s));
    Var mean = ad::mean_axis(x, 1);
    Var var = ad::var_axis(x, 1);
    cache_.store(tape, mean, var, s[0]);
    Var std = ad::broadcast_to(ad::power(ad::add_scalar(var, eps_), 0.5), s);
    Var out = (x - ad::broadcast_to(mean, s)) / std;
    if (affine_) out = out * ad::exp(tape.parameter(log_scale)) + tape.parameter(shift);
    return out;
}

Var RevInTransform::inverse(Tape& tape, Var y) {
    const Shape& s = y.shape();
    if (s.size() != 3 || s[2] != log_scale.value.size())
        throw DimensionError("RevIN inverse expects [batch, H, " + std::to_string(log_scale.value.size()) +
                             "], got " + shape_string(s));
    auto [mean, var] = cache_.fetch(tape);
    if (s[0] != cache_.batch())
        throw ContractError("RevIN inverse batch " + std::to_string(s[0]) + " does not match cached batch " +
                            std::to_string(cache_.batch()));
    Var out = y;
    if (affine_) out = (out - tape.parameter(shift)) / ad::exp(tape.parameter(log_scale));
    Var std = ad::broadcast_to(ad::power(ad::add_scalar(var, eps_), 0.5), s);
    return out * std + ad::broadcast_to(mean, s);
}

std::vector<Parameter*> RevInTransform::parameters() {
    if (!affine_) return {};
    return {&log_scale, &shift};
}

}  // namespace inflow
