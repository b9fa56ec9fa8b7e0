#include "inflow/flow.hpp"

#include <algorithm>
#include <iostream>
#include <mutex>

namespace inflow {

using ad::Tape;
using ad::Var;

// ---------------------------------------------------------------------------
// StatsCache

void StatsCache::store(Tape& tape, Var mean, Var var, std::size_t batch) {
    live_ = true;
    tape_serial_ = tape.serial();
    mean_ = mean;
    var_ = var;
    mean_value_ = mean.value();
    var_value_ = var.value();
    batch_ = batch;
}

std::pair<Var, Var> StatsCache::fetch(Tape& tape) const {
    if (!live_) throw ContractError("inverse called before forward: normalization statistics are not cached");
    if (tape.serial() == tape_serial_ && mean_.tape() == &tape) return {mean_, var_};
    return {tape.constant(mean_value_), tape.constant(var_value_)};
}

namespace {

void require_rank3(Var h, const char* where) {
    if (h.shape().size() != 3)
        throw DimensionError(std::string(where) + " expects [batch, len, D], got " + shape_string(h.shape()));
}

void require_variates(Var h, std::size_t variates, const char* where) {
    require_rank3(h, where);
    if (h.shape()[2] != variates)
        throw DimensionError(std::string(where) + " built for D=" + std::to_string(variates) + ", got " +
                             shape_string(h.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// InstanceNormLayer

InstanceNormLayer::InstanceNormLayer(const std::string& name, std::size_t variates, double eps, bool detach_stats)
    : log_scale{name + "/log_scale", Tensor({variates})},
      shift{name + "/shift", Tensor({variates})},
      eps_(eps),
      detach_stats_(detach_stats) {
    if (!(eps > 0.0)) throw ContractError("instance norm eps must be positive");
}

Var InstanceNormLayer::forward(Tape& tape, Var h) {
    require_variates(h, log_scale.value.size(), "instance norm");
    Var mean = ad::mean_axis(h, 1);
    Var var = ad::var_axis(h, 1);
    if (detach_stats_) {
        mean = ad::detach(mean);
        var = ad::detach(var);
    }
    cache_.store(tape, mean, var, h.shape()[0]);
    // [B,1,D] * [D]: per-instance inverse std times exp(log_scale).
    Var factor = ad::power(ad::add_scalar(var, eps_), -0.5) * ad::exp(tape.parameter(log_scale));
    Var centered = h - ad::broadcast_to(mean, h.shape());
    return centered * ad::broadcast_to(factor, h.shape()) + tape.parameter(shift);
}

Var InstanceNormLayer::inverse(Tape& tape, Var h) {
    require_variates(h, log_scale.value.size(), "instance norm inverse");
    if (cache_.live() && h.shape()[0] != cache_.batch())
        throw ContractError("instance norm inverse batch " + std::to_string(h.shape()[0]) +
                            " does not match cached batch " + std::to_string(cache_.batch()));
    auto [mean, var] = cache_.fetch(tape);
    Var factor = ad::power(ad::add_scalar(var, eps_), 0.5) * ad::exp(ad::neg(tape.parameter(log_scale)));
    Var centered = h - tape.parameter(shift);
    return centered * ad::broadcast_to(factor, h.shape()) + ad::broadcast_to(mean, h.shape());
}

void InstanceNormLayer::collect_parameters(std::vector<Parameter*>& out) {
    out.push_back(&log_scale);
    out.push_back(&shift);
}

// ---------------------------------------------------------------------------
// BatchNormLayer

BatchNormLayer::BatchNormLayer(const std::string& name, std::size_t variates, double eps, double momentum)
    : log_scale{name + "/log_scale", Tensor({variates})},
      shift{name + "/shift", Tensor({variates})},
      running_mean{name + "/running_mean", Tensor({variates}, 0.0)},
      running_var{name + "/running_var", Tensor({variates}, 1.0)},
      eps_(eps),
      momentum_(momentum) {
    if (!(eps > 0.0)) throw ContractError("batch norm eps must be positive");
}

Var BatchNormLayer::forward(Tape& tape, Var h) {
    const std::size_t d = log_scale.value.size();
    require_variates(h, d, "batch norm");
    Var mean, var;
    if (training_) {
        Var flat = ad::reshape(h, {h.value().size() / d, d});
        mean = ad::reshape(ad::mean_axis(flat, 0), {d});
        var = ad::reshape(ad::var_axis(flat, 0), {d});
        for (std::size_t i = 0; i < d; ++i) {
            running_mean.value[i] = (1.0 - momentum_) * running_mean.value[i] + momentum_ * mean.value()[i];
            running_var.value[i] = (1.0 - momentum_) * running_var.value[i] + momentum_ * var.value()[i];
        }
    } else {
        mean = tape.constant(running_mean.value);
        var = tape.constant(running_var.value);
    }
    cache_.store(tape, mean, var, h.shape()[0]);
    Var factor = ad::power(ad::add_scalar(var, eps_), -0.5) * ad::exp(tape.parameter(log_scale));
    return (h - mean) * factor + tape.parameter(shift);
}

Var BatchNormLayer::inverse(Tape& tape, Var h) {
    require_variates(h, log_scale.value.size(), "batch norm inverse");
    auto [mean, var] = cache_.fetch(tape);
    Var factor = ad::power(ad::add_scalar(var, eps_), 0.5) * ad::exp(ad::neg(tape.parameter(log_scale)));
    return (h - tape.parameter(shift)) * factor + mean;
}

void BatchNormLayer::collect_parameters(std::vector<Parameter*>& out) {
    out.push_back(&log_scale);
    out.push_back(&shift);
}

void BatchNormLayer::collect_buffers(std::vector<Parameter*>& out) {
    out.push_back(&running_mean);
    out.push_back(&running_var);
}

// ---------------------------------------------------------------------------
// CouplingLayer

CouplingLayer::CouplingLayer(const std::string& name, std::size_t variates, std::size_t hidden_width, Rng& rng)
    : variates_(variates), split_((variates + 1) / 2) {
    if (variates < 2) {
        static std::once_flag warned;
        std::call_once(warned, [] {
            std::cerr << "warning: coupling layer with a single variate has nothing to condition on; "
                         "it acts as the identity\n";
        });
        return;
    }
    const std::size_t rest = variates - split_;
    scale_net_ = std::make_unique<Mlp>(name + "/scale_net", std::vector<std::size_t>{split_, hidden_width, hidden_width, rest},
                                       Activation::tanh, rng, true);
    translate_net_ = std::make_unique<Mlp>(name + "/translate_net",
                                           std::vector<std::size_t>{split_, hidden_width, hidden_width, rest},
                                           Activation::tanh, rng, true);
}

Var CouplingLayer::scale(Tape& tape, Var pass) {
    // exp(tanh(.)) keeps the scale inside [1/e, e].
    Var s = ad::exp(ad::tanh((*scale_net_)(tape, pass)));
    const auto values = s.value().data();
    if (!std::all_of(values.begin(), values.end(), [](double v) { return v > 0.0; }))
        throw NumericError("coupling scale is not strictly positive");
    return s;
}

Var CouplingLayer::forward(Tape& tape, Var h) {
    require_variates(h, variates_, "coupling");
    if (degenerate()) return h;
    Var pass = ad::slice(h, 2, 0, split_);
    Var rest = ad::slice(h, 2, split_, variates_);
    Var out = rest * scale(tape, pass) + (*translate_net_)(tape, pass);
    return ad::concat({pass, out}, 2);
}

Var CouplingLayer::inverse(Tape& tape, Var h) {
    require_variates(h, variates_, "coupling inverse");
    if (degenerate()) return h;
    Var pass = ad::slice(h, 2, 0, split_);
    Var rest = ad::slice(h, 2, split_, variates_);
    Var out = (rest - (*translate_net_)(tape, pass)) / scale(tape, pass);
    return ad::concat({pass, out}, 2);
}

void CouplingLayer::collect_parameters(std::vector<Parameter*>& out) {
    if (degenerate()) return;
    scale_net_->collect(out);
    translate_net_->collect(out);
}

// ---------------------------------------------------------------------------
// PermuteLayer

Var permute_reverse(Var h) {
    const std::size_t d = h.shape().back();
    if (d == 1) return h;
    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = d - 1 - i;
    return ad::gather_last(h, order);
}

PermuteLayer::PermuteLayer(std::size_t variates) : order_(variates) {
    for (std::size_t i = 0; i < variates; ++i) order_[i] = variates - 1 - i;
}

Var PermuteLayer::forward(Tape&, Var h) {
    require_variates(h, order_.size(), "permute");
    if (order_.size() == 1) return h;
    return ad::gather_last(h, order_);
}

// ---------------------------------------------------------------------------
// FlowStack

std::string to_string(FlowVariant v) {
    switch (v) {
        case FlowVariant::pre_norm: return "pre_norm";
        case FlowVariant::post_norm: return "post_norm";
        case FlowVariant::coupling_only: return "coupling_only";
        case FlowVariant::batch_norm: return "batch_norm";
    }
    return "unknown";
}

FlowVariant flow_variant_from_string(const std::string& s) {
    if (s == "pre_norm") return FlowVariant::pre_norm;
    if (s == "post_norm") return FlowVariant::post_norm;
    if (s == "coupling_only") return FlowVariant::coupling_only;
    if (s == "batch_norm") return FlowVariant::batch_norm;
    throw ConfigError("unknown flow variant '" + s + "'");
}

FlowStack::FlowStack(std::vector<std::unique_ptr<FlowLayer>> layers) : layers_(std::move(layers)) {}

Var FlowStack::forward(Tape& tape, Var x) {
    require_rank3(x, "flow forward");
    if (x.shape()[0] == 0) throw ContractError("flow forward on an empty batch");
    for (auto& layer : layers_) x = layer->forward(tape, x);
    return x;
}

Var FlowStack::inverse(Tape& tape, Var y) {
    require_rank3(y, "flow inverse");
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) y = (*it)->inverse(tape, y);
    return y;
}

std::vector<Parameter*> FlowStack::parameters() {
    std::vector<Parameter*> out;
    for (auto& layer : layers_) layer->collect_parameters(out);
    return out;
}

std::vector<Parameter*> FlowStack::buffers() {
    std::vector<Parameter*> out;
    for (auto& layer : layers_) layer->collect_buffers(out);
    return out;
}

void FlowStack::set_training(bool training) {
    for (auto& layer : layers_) layer->set_training(training);
}

std::unique_ptr<FlowStack> make_flow_stack(FlowVariant variant, std::size_t blocks, std::size_t variates,
                                           const FlowOptions& options, Rng& rng) {
    if (variates == 0) throw ContractError("flow needs at least one variate");
    std::vector<std::unique_ptr<FlowLayer>> layers;
    for (std::size_t k = 0; k < blocks; ++k) {
        const std::string prefix = "phi/block" + std::to_string(k);
        auto norm = [&] {
            return std::make_unique<InstanceNormLayer>(prefix + "/norm", variates, options.eps, options.detach_stats);
        };
        auto coupling = [&] {
            return std::make_unique<CouplingLayer>(prefix + "/coupling", variates, options.coupling_width, rng);
        };
        switch (variant) {
            case FlowVariant::pre_norm:
                layers.push_back(norm());
                layers.push_back(coupling());
                layers.push_back(std::make_unique<PermuteLayer>(variates));
                break;
            case FlowVariant::post_norm:
                layers.push_back(coupling());
                layers.push_back(std::make_unique<PermuteLayer>(variates));
                layers.push_back(norm());
                break;
            case FlowVariant::coupling_only:
                layers.push_back(coupling());
                layers.push_back(std::make_unique<PermuteLayer>(variates));
                break;
            case FlowVariant::batch_norm:
                layers.push_back(std::make_unique<BatchNormLayer>(prefix + "/norm", variates, options.eps));
                layers.push_back(coupling());
                layers.push_back(std::make_unique<PermuteLayer>(variates));
                break;
        }
    }
    return std::make_unique<FlowStack>(std::move(layers));
}

}  // namespace inflow
