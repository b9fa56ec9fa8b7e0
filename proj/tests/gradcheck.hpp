#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "inflow/ops.hpp"
#include "inflow/rng.hpp"

namespace inflow::testing {

/// Scalar loss built from variables placed on a fresh tape.
using LossFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t probes = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are zero up to
// finite-difference noise from dominating.
inline double rel_error(double analytic, double numeric, double floor = 1e-3) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double eval_loss(const LossFn& f, const std::vector<Tensor>& inputs) {
    ad::Tape tape(false);
    std::vector<ad::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    return f(tape, vars).value().item();
}

/// Compares reverse-mode gradients with central differences at up to
/// `max_probes` coordinates per input (all of them when the input is small).
inline GradCheckResult gradcheck(const LossFn& f, std::vector<Tensor> inputs, Rng& rng,
                                 std::size_t max_probes = 24, double step = 1e-5) {
    std::vector<Tensor> grads;
    {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (const auto& t : inputs) vars.push_back(tape.variable(t));
        tape.backward(f(tape, vars));
        for (auto v : vars) grads.push_back(tape.grad(v));
    }
    GradCheckResult r;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const std::size_t n = inputs[k].size();
        std::vector<std::size_t> coords(n);
        for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        if (n > max_probes) {
            rng.shuffle(coords);
            coords.resize(max_probes);
        }
        for (auto i : coords) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + step;
            const double up = eval_loss(f, inputs);
            inputs[k][i] = orig - step;
            const double down = eval_loss(f, inputs);
            inputs[k][i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            r.max_rel_error = std::max(r.max_rel_error, rel_error(grads[k][i], numeric));
            ++r.probes;
        }
    }
    return r;
}

/// Same check against the parameters of a model: `f` reads them through
/// tape.parameter(), so values are perturbed in place.
inline GradCheckResult gradcheck_params(const std::function<ad::Var(ad::Tape&)>& f,
                                        const std::vector<Parameter*>& params, Rng& rng,
                                        std::size_t max_probes = 8, double step = 1e-5) {
    std::vector<Tensor> grads;
    {
        ad::Tape tape;
        tape.backward(f(tape));
        for (auto* p : params) grads.push_back(tape.grad(*p));
    }
    auto loss = [&] {
        ad::Tape tape(false);
        return f(tape).value().item();
    };
    GradCheckResult r;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& value = params[k]->value;
        std::vector<std::size_t> coords(value.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (coords.size() > max_probes) {
            rng.shuffle(coords);
            coords.resize(max_probes);
        }
        for (auto i : coords) {
            const double orig = value[i];
            value[i] = orig + step;
            const double up = loss();
            value[i] = orig - step;
            const double down = loss();
            value[i] = orig;
            r.max_rel_error = std::max(r.max_rel_error, rel_error(grads[k][i], (up - down) / (2.0 * step)));
            ++r.probes;
        }
    }
    return r;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t(shape);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

/// Weighted sum so every output element carries a distinct gradient.
inline ad::Var weighted_sum(ad::Tape& tape, ad::Var out, std::uint64_t seed = 99) {
    Rng rng(seed);
    return ad::sum_all(out * tape.constant(random_tensor(out.shape(), rng, -1.0, 1.0)));
}

/// Redraws every parameter from N(0, scale^2).
inline void randomize(const std::vector<Parameter*>& params, Rng& rng, double scale = 0.3) {
    for (auto* p : params)
        for (double& v : p->value.data()) v = scale * rng.normal();
}

}  // namespace inflow::testing
