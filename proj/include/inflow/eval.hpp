#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "inflow/data.hpp"
#include "inflow/pipeline.hpp"

namespace inflow {

struct SeedMetrics {
    std::uint64_t seed = 0;
    double mse = 0.0;
    double mae = 0.0;
};

struct MetricReport {
    /// Raw values; scale factors never touch these.
    double mse = 0.0;
    double mae = 0.0;
    std::optional<double> mse_scale;
    std::optional<double> mae_scale;
    std::vector<SeedMetrics> per_seed;
    double mse_mean = 0.0, mse_std = 0.0;
    double mae_mean = 0.0, mae_std = 0.0;

    double reported_mse() const { return mse * mse_scale.value_or(1.0); }
    double reported_mae() const { return mae * mae_scale.value_or(1.0); }

    nlohmann::json to_json() const;
};

/// Elementwise over all windows, steps and variates.
double mean_squared_error(const Tensor& pred, const Tensor& truth);
double mean_absolute_error(const Tensor& pred, const Tensor& truth);

struct EvalOptions {
    /// The windows are in z-scored units; metrics are reported after inverting.
    bool zscored = false;
    const ZScoreStats* stats = nullptr;
    std::optional<double> mse_scale;
    std::optional<double> mae_scale;
    std::size_t chunk = 256;
};

MetricReport evaluate(Pipeline& pipeline, const std::vector<WindowPair>& windows, const EvalOptions& options);

/// Combines single-seed reports; population std, so one seed gives 0.
MetricReport aggregate_seeds(const std::vector<SeedMetrics>& seeds, std::optional<double> mse_scale = std::nullopt,
                             std::optional<double> mae_scale = std::nullopt);

/// Stage series of one window in model units: x and x_tilde over the
/// lookback, y_tilde, y_hat and y over the horizon.
struct TraceRecord {
    std::size_t anchor = 0;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t variates = 0;
    Tensor x, x_tilde, y_tilde, y_hat, y;

    std::size_t rows() const { return lookback + horizon; }
    /// Long format: step_index,stage,variate,value. Horizon steps are
    /// numbered lookback..lookback+horizon-1.
    std::string to_csv() const;
};

TraceRecord dump_forecast_trace(Pipeline& pipeline, const WindowPair& window);

}  // namespace inflow
