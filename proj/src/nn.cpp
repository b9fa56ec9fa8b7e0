#include "inflow/nn.hpp"

#include <cmath>

namespace inflow {

ad::Var activate(ad::Var x, Activation act) {
    switch (act) {
        case Activation::relu: return ad::relu(x);
        case Activation::tanh: return ad::tanh(x);
        case Activation::none: break;
    }
    return x;
}

Dense::Dense(std::string name, std::size_t in, std::size_t out, Rng& rng, bool zero_init)
    : weight{name + "/weight", Tensor({in, out})}, bias{name + "/bias", Tensor({out})} {
    if (zero_init) return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : weight.value.data()) w = rng.uniform(-bound, bound);
    for (auto& b : bias.value.data()) b = rng.uniform(-bound, bound);
}

ad::Var Dense::operator()(ad::Tape& tape, ad::Var x) {
    return ad::affine(x, tape.parameter(weight), tape.parameter(bias));
}

void Dense::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

Mlp::Mlp(const std::string& name, const std::vector<std::size_t>& widths, Activation hidden, Rng& rng,
         bool zero_init_head)
    : hidden_(hidden) {
    if (widths.size() < 2) throw ContractError("Mlp needs at least input and output widths");
    layers_.reserve(widths.size() - 1);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const bool head = i + 2 == widths.size();
        layers_.emplace_back(name + "/layer" + std::to_string(i), widths[i], widths[i + 1], rng, head && zero_init_head);
    }
}

ad::Var Mlp::operator()(ad::Tape& tape, ad::Var x) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i](tape, x);
        if (i + 1 < layers_.size()) x = activate(x, hidden_);
    }
    return x;
}

void Mlp::collect(std::vector<Parameter*>& out) {
    for (auto& l : layers_) l.collect(out);
}

}  // namespace inflow
