#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "inflow/adam.hpp"
#include "inflow/data.hpp"
#include "inflow/pipeline.hpp"

namespace inflow {

enum class TrainMode {
    bilevel,        // alternate: theta on inner_train, then phi on outer_val
    joint,          // theta and phi together on inner_train
    backbone_only,  // theta only
};

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
    double inner_lr = 1e-3;
    double outer_lr = 1e-4;
    std::size_t batch_size = 1024;
    std::size_t patience = 5;
    std::size_t max_epochs = 100;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::bilevel;
    /// Global-norm clip applied per parameter group; <= 0 disables.
    double grad_clip = 5.0;
    /// Windows per forward pass when computing validation loss.
    std::size_t eval_batch = 256;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Mean squared error over all elements.
double loss_l2(const Tensor& y_hat, const Tensor& y);
ad::Var loss_l2(ad::Var y_hat, ad::Var y);

struct Batch {
    Tensor x;  // [batch, L, D]
    Tensor y;  // [batch, H, D]
    WindowRole role = WindowRole::inner_train;
    std::size_t first_anchor = 0;
    std::size_t last_anchor = 0;
};

/// Stacks the selected windows; all must share one role.
Batch make_batch(const std::vector<WindowPair>& windows, std::span<const std::size_t> indices);
Batch make_batch(const std::vector<WindowPair>& windows, std::size_t begin, std::size_t end);

enum class ParamGroup { theta, phi };

struct UpdateRecord {
    ParamGroup group;
    WindowRole source;
    std::size_t first_anchor;
    std::size_t last_anchor;
};

struct EpochRecord {
    std::size_t epoch;  // 1-based
    double train_loss;
    double val_loss;
};

/// Optimizer state and bookkeeping for one training run.
struct BiLevelState {
    BiLevelState(Pipeline& pipeline, const TrainConfig& config);

    TrainConfig config;
    std::vector<Parameter*> theta;
    std::vector<Parameter*> phi;
    std::vector<AdamState> theta_adam;
    std::vector<AdamState> phi_adam;
    std::size_t inner_batch_cursor = 0;
    std::size_t outer_batch_cursor = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_improve = 0;
    std::vector<EpochRecord> loss_history;
    std::vector<UpdateRecord> updates;
    std::size_t clipped_updates = 0;
};

struct StepLosses {
    double inner = 0.0;
    double outer = 0.0;
};

/**
 * One first-order alternating update:
 *   1. theta <- Adam(grad_theta L(theta, phi; inner batch)), phi frozen;
 *   2. phi   <- Adam(grad_phi L(theta_new, phi; outer batch)), theta frozen.
 * Throws ContractError if the batches come from the wrong splits and
 * NumericError (naming the sub-step and anchor range) on a non-finite loss.
 */
StepLosses bilevel_step(BiLevelState& state, Pipeline& pipeline, const Batch& inner, const Batch& outer);

/// Simultaneous update of theta (inner_lr) and phi (outer_lr) on the inner batch.
double joint_step(BiLevelState& state, Pipeline& pipeline, const Batch& inner);

/// Model-space MSE over the windows, evaluation mode, no gradients.
double mean_loss(Pipeline& pipeline, const std::vector<WindowPair>& windows, std::size_t chunk = 256);

struct RunReport {
    std::vector<EpochRecord> loss_history;
    std::size_t best_epoch = 0;  // 0 when no epoch ran
    double best_val_loss = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    std::string config_hash;
    TrainMode mode = TrainMode::bilevel;
    double grad_clip = 0.0;
    std::size_t clipped_updates = 0;
    std::size_t theta_updates = 0;
    std::size_t phi_updates = 0;
    std::vector<std::string> diagnostics;
    /// Full update log; kept in memory, summarized in JSON.
    std::vector<UpdateRecord> updates;

    nlohmann::json to_json() const;
    /// epoch,train_loss,val_loss rows.
    std::string loss_csv() const;
};

/**
 * Runs epochs (one pass over inner_train each) until max_epochs or until the
 * validation region fails to improve for `patience` epochs, then restores
 * the best-epoch parameters.
 */
RunReport train(Pipeline& pipeline, const WindowSet& windows, const TrainConfig& config);

}  // namespace inflow
