#pragma once

#include <string>
#include <vector>

#include "inflow/ops.hpp"
#include "inflow/rng.hpp"

namespace inflow {

enum class Activation { none, relu, tanh };

ad::Var activate(ad::Var x, Activation act);

/// y = x W + b over the last axis. Weights start uniform in +-1/sqrt(fan_in).
class Dense {
public:
    Dense(std::string name, std::size_t in, std::size_t out, Rng& rng, bool zero_init = false);

    ad::Var operator()(ad::Tape& tape, ad::Var x);
    void collect(std::vector<Parameter*>& out);

    std::size_t in_features() const { return weight.value.dim(0); }
    std::size_t out_features() const { return weight.value.dim(1); }

    Parameter weight;
    Parameter bias;
};

/// Stack of Dense layers with a hidden activation and a linear head.
class Mlp {
public:
    /// widths = {in, hidden..., out}.
    Mlp(const std::string& name, const std::vector<std::size_t>& widths, Activation hidden, Rng& rng,
        bool zero_init_head = false);

    ad::Var operator()(ad::Tape& tape, ad::Var x);
    void collect(std::vector<Parameter*>& out);

    std::vector<Dense>& layers() { return layers_; }

private:
    std::vector<Dense> layers_;
    Activation hidden_;
};

}  // namespace inflow
