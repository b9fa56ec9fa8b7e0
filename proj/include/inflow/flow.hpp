#pragma once

#include <memory>
#include <string>
#include <vector>

#include "inflow/nn.hpp"
#include "inflow/transform.hpp"

namespace inflow {

/// One invertible layer of a FlowStack acting on [batch, len, D].
class FlowLayer {
public:
    virtual ~FlowLayer() = default;
    virtual ad::Var forward(ad::Tape& tape, ad::Var h) = 0;
    virtual ad::Var inverse(ad::Tape& tape, ad::Var h) = 0;
    virtual void collect_parameters(std::vector<Parameter*>&) {}
    virtual void collect_buffers(std::vector<Parameter*>&) {}
    virtual void set_training(bool) {}
    virtual std::string kind() const = 0;
};

/**
 * Per-instance, per-variate standardization over the time axis followed by
 * a learnable affine map:
 *
 *   out = (h - mu) * (var + eps)^(-1/2) * exp(log_scale) + shift
 *
 * mu and var are computed from the forward input and cached; inverse()
 * applies the exact algebraic inverse with those cached statistics, so a
 * forward on a length-L lookback can be undone on a length-H horizon.
 */
class InstanceNormLayer final : public FlowLayer {
public:
    InstanceNormLayer(const std::string& name, std::size_t variates, double eps = 1e-5, bool detach_stats = false);

    ad::Var forward(ad::Tape& tape, ad::Var h) override;
    ad::Var inverse(ad::Tape& tape, ad::Var h) override;
    void collect_parameters(std::vector<Parameter*>& out) override;
    std::string kind() const override { return "instance_norm"; }

    const StatsCache& cache() const { return cache_; }

    Parameter log_scale;
    Parameter shift;

private:
    double eps_;
    bool detach_stats_;
    StatsCache cache_;
};

/// Same affine form as InstanceNormLayer but with statistics pooled over the
/// batch and time axes. Evaluation mode uses running averages.
class BatchNormLayer final : public FlowLayer {
public:
    BatchNormLayer(const std::string& name, std::size_t variates, double eps = 1e-5, double momentum = 0.1);

    ad::Var forward(ad::Tape& tape, ad::Var h) override;
    ad::Var inverse(ad::Tape& tape, ad::Var h) override;
    void collect_parameters(std::vector<Parameter*>& out) override;
    void collect_buffers(std::vector<Parameter*>& out) override;
    void set_training(bool training) override { training_ = training; }
    std::string kind() const override { return "batch_norm"; }

    Parameter log_scale;
    Parameter shift;
    Parameter running_mean;
    Parameter running_var;

private:
    double eps_;
    double momentum_;
    bool training_ = true;
    StatsCache cache_;
};

/**
 * Affine coupling over the variate axis, applied independently per time step.
 * The first split channels pass through unchanged; the rest become
 * h * exp(tanh(s(h_pass))) + t(h_pass). With a single variate there is
 * nothing to condition on and the layer is the identity.
 */
class CouplingLayer final : public FlowLayer {
public:
    CouplingLayer(const std::string& name, std::size_t variates, std::size_t hidden_width, Rng& rng);

    ad::Var forward(ad::Tape& tape, ad::Var h) override;
    ad::Var inverse(ad::Tape& tape, ad::Var h) override;
    void collect_parameters(std::vector<Parameter*>& out) override;
    std::string kind() const override { return "coupling"; }

    std::size_t split_index() const { return split_; }
    bool degenerate() const { return !scale_net_; }
    Mlp& scale_net() { return *scale_net_; }
    Mlp& translate_net() { return *translate_net_; }

private:
    ad::Var scale(ad::Tape& tape, ad::Var pass);

    std::size_t variates_;
    std::size_t split_;
    std::unique_ptr<Mlp> scale_net_;
    std::unique_ptr<Mlp> translate_net_;
};

/// Reverses the variate order; its own inverse.
class PermuteLayer final : public FlowLayer {
public:
    explicit PermuteLayer(std::size_t variates);
    ad::Var forward(ad::Tape& tape, ad::Var h) override;
    ad::Var inverse(ad::Tape& tape, ad::Var h) override { return forward(tape, h); }
    std::string kind() const override { return "permute"; }

private:
    std::vector<std::size_t> order_;
};

/// Reverses the last axis of a [.., D] var.
ad::Var permute_reverse(ad::Var h);

enum class FlowVariant {
    pre_norm,       // [InstanceNorm -> Coupling -> Permute] x K  (IN-Flow)
    post_norm,      // [Coupling -> Permute -> InstanceNorm] x K  (IN-Flow-T)
    coupling_only,  // [Coupling -> Permute] x K                   (RealNVP-c)
    batch_norm,     // [BatchNorm -> Coupling -> Permute] x K      (RealNVP)
};

std::string to_string(FlowVariant v);
FlowVariant flow_variant_from_string(const std::string& s);

struct FlowOptions {
    std::size_t coupling_width = 128;
    double eps = 1e-5;
    bool detach_stats = false;
};

/// Ordered invertible layers; inverse() undoes them in reverse order.
class FlowStack final : public Transform {
public:
    FlowStack() = default;
    explicit FlowStack(std::vector<std::unique_ptr<FlowLayer>> layers);

    ad::Var forward(ad::Tape& tape, ad::Var x) override;
    ad::Var inverse(ad::Tape& tape, ad::Var y) override;
    std::vector<Parameter*> parameters() override;
    std::vector<Parameter*> buffers() override;
    void set_training(bool training) override;
    std::string kind() const override { return "flow"; }

    const std::vector<std::unique_ptr<FlowLayer>>& layers() const { return layers_; }

private:
    std::vector<std::unique_ptr<FlowLayer>> layers_;
};

std::unique_ptr<FlowStack> make_flow_stack(FlowVariant variant, std::size_t blocks, std::size_t variates,
                                           const FlowOptions& options, Rng& rng);

}  // namespace inflow
