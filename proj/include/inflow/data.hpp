#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "inflow/tensor.hpp"

namespace inflow {

/// Piecewise cosine series whose amplitude, period, phase and level are
/// redrawn every `tau` steps.
struct SyntheticConfig {
    std::size_t tau = 24;
    std::size_t total_length = 10000;
    std::size_t num_series = 5;
    std::uint64_t seed = 0;
    /// Periods below min_period alias into noise; clamp them unless disabled.
    bool clamp_period = true;
    double min_period = 2.0;

    /// "synthetic-1" (tau 24), "synthetic-2" (tau 12), "synthetic-3" (tau 48).
    static SyntheticConfig preset(const std::string& name);
    void validate() const;
    nlohmann::json to_json() const;
    static SyntheticConfig from_json(const nlohmann::json& j);
};

struct SegmentParams {
    std::size_t start = 0;
    std::size_t length = 0;
    double amplitude = 0.0;
    double period = 0.0;
    double phase = 0.0;
    double level = 0.0;

    double value_at(double t) const;
};

std::size_t segment_count(std::size_t total_length, std::size_t tau);
/// Segment parameters of one generated series, in time order.
std::vector<SegmentParams> synthetic_segments(const SyntheticConfig& cfg, std::size_t series);

struct SplitRatios {
    std::size_t train = 6;
    std::size_t val = 2;
    std::size_t test = 2;
};

/// values is [T, D]. Regions: train [0, train_end), validation
/// [train_end, val_end), test [val_end, T).
struct SeriesDataset {
    Tensor values;
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::vector<std::string> columns;
    nlohmann::json provenance;
    bool zscored = false;

    std::size_t length() const { return values.dim(0); }
    std::size_t variates() const { return values.dim(1); }
};

SeriesDataset generate_synthetic(const SyntheticConfig& cfg);

/// Reads a comma-separated file with a header row. An empty column list selects every column.
SeriesDataset load_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
                       SplitRatios ratios = {});
void write_csv(const SeriesDataset& ds, const std::filesystem::path& path);

/// Records provenance, shape and split indices.
nlohmann::json dataset_manifest(const SeriesDataset& ds);

enum class WindowRole { inner_train, outer_val, validation, test };
std::string to_string(WindowRole r);

/// x = s[anchor - L, anchor), y = s[anchor, anchor + H).
struct WindowPair {
    Tensor x;
    Tensor y;
    std::size_t anchor = 0;
    WindowRole role = WindowRole::inner_train;
};

struct WindowOptions {
    std::size_t lookback = 48;
    std::size_t horizon = 48;
    /// Split the training anchors 90/10 into inner_train and outer_val.
    bool use_bilevel = true;
    std::size_t stride = 1;
};

struct WindowSet {
    std::vector<WindowPair> inner_train;
    std::vector<WindowPair> outer_val;
    std::vector<WindowPair> validation;
    std::vector<WindowPair> test;

    /// FNV-1a over every (region, anchor) pair; role labels inside the
    /// training region do not enter the hash.
    std::uint64_t anchor_hash() const;
};

WindowSet make_windows(const SeriesDataset& ds, const WindowOptions& options);

struct ZScoreStats {
    std::vector<double> mean;
    std::vector<double> std;

    /// Both operate on any tensor whose last axis is the variate axis.
    Tensor apply(const Tensor& t) const;
    Tensor invert(const Tensor& t) const;

    nlohmann::json to_json() const;
    static ZScoreStats from_json(const nlohmann::json& j);
};

/// Per-variate statistics from the training region, applied to every region.
std::pair<SeriesDataset, ZScoreStats> zscore_fit_apply(const SeriesDataset& ds);

}  // namespace inflow
