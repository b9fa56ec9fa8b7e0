#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "inflow/ops.hpp"

namespace inflow {

/**
 * Invertible window transform shared by the flow stacks and the baselines.
 *
 * forward() maps a lookback batch [batch, L, D] into the transformed space
 * and caches whatever per-instance state inverse() needs; inverse() maps a
 * transformed horizon batch [batch, H, D] back using that state.
 */
class Transform {
public:
    virtual ~Transform() = default;

    virtual ad::Var forward(ad::Tape& tape, ad::Var x) = 0;
    virtual ad::Var inverse(ad::Tape& tape, ad::Var y) = 0;

    /// Learnable parameters (the phi group).
    virtual std::vector<Parameter*> parameters() = 0;
    /// Non-learnable state that must travel with checkpoints.
    virtual std::vector<Parameter*> buffers() { return {}; }
    virtual void set_training(bool) {}
    virtual std::string kind() const = 0;
};

/// Normalization statistics captured on a forward pass for the matching inverse.
class StatsCache {
public:
    void store(ad::Tape& tape, ad::Var mean, ad::Var var, std::size_t batch);
    /// Vars on `tape` for the cached statistics. Reuses the recorded nodes when
    /// the cache was filled on the same tape, otherwise re-enters them as constants.
    std::pair<ad::Var, ad::Var> fetch(ad::Tape& tape) const;

    bool live() const noexcept { return live_; }
    std::size_t batch() const noexcept { return batch_; }
    const Tensor& mean() const noexcept { return mean_value_; }
    const Tensor& var() const noexcept { return var_value_; }
    void clear() noexcept { live_ = false; }

private:
    bool live_ = false;
    std::uint64_t tape_serial_ = 0;
    ad::Var mean_, var_;
    Tensor mean_value_, var_value_;
    std::size_t batch_ = 0;
};

/// Pass-through transform: the plain-backbone arm.
class IdentityTransform final : public Transform {
public:
    ad::Var forward(ad::Tape&, ad::Var x) override { return x; }
    ad::Var inverse(ad::Tape&, ad::Var y) override { return y; }
    std::vector<Parameter*> parameters() override { return {}; }
    std::string kind() const override { return "identity"; }
};

}  // namespace inflow
