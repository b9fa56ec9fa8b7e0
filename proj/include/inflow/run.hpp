#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "inflow/config.hpp"
#include "inflow/eval.hpp"
#include "inflow/pipeline.hpp"

namespace inflow {

/// Dataset after optional z-scoring, with the statistics needed to undo it.
struct PreparedData {
    SeriesDataset dataset;
    std::optional<ZScoreStats> stats;
    nlohmann::json manifest;
};

PreparedData prepare_data(const RunConfig& config);
WindowSet build_windows(const PreparedData& data, const RunConfig& config);

std::unique_ptr<Transform> make_transform(const ModelSection& model, std::size_t variates, Rng& rng);
/// Forecaster and transform draw from independent streams of `seed`.
std::unique_ptr<Pipeline> build_pipeline(const ModelSection& model, std::size_t variates, std::uint64_t seed);

struct SeedOutcome {
    std::uint64_t seed = 0;
    RunReport report;
    MetricReport test;
    std::uint64_t anchor_hash = 0;
};

/// Trains and evaluates one seed. Writes seed-<n>/ artifacts under run_dir when given.
SeedOutcome run_seed(const RunConfig& config, const PreparedData& data, const WindowSet& windows, std::uint64_t seed,
                     const std::optional<std::filesystem::path>& run_dir);

/// Writes config.json and manifest.json (with the content hash) into run_dir.
void write_run_header(const RunConfig& config, const PreparedData& data, const std::filesystem::path& run_dir);

struct TrainOutcome {
    std::vector<SeedOutcome> seeds;
    MetricReport test;  // aggregated over seeds
};

/// Writes series.csv and manifest.json.
void cmd_synth(const SyntheticConfig& cfg, const std::filesystem::path& out_dir);
TrainOutcome cmd_train(const RunConfig& config);

struct EvalRequest {
    std::filesystem::path run_dir;
    /// Defaults to run_dir/seed-<n>/checkpoint.bin per seed.
    std::optional<std::filesystem::path> checkpoint;
    /// Test-window indices to dump as traces.
    std::vector<std::size_t> trace_windows;
};

struct EvalOutcome {
    MetricReport test;
    /// Model-space loss on the dataset validation region, per seed.
    std::map<std::uint64_t, double> val_loss;
    std::vector<std::filesystem::path> traces;
};

EvalOutcome cmd_eval(const RunConfig& config, const EvalRequest& request);

struct AblationCell {
    Variant variant;
    bool ok = false;
    std::string error;
    TrainOutcome outcome;
};

struct AblationTable {
    std::vector<AblationCell> cells;
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

/// Runs every roster variant on shared data and seeds. Variants run on up to
/// `threads` worker threads; a failing variant is recorded and the rest continue.
AblationTable cmd_ablate(const RunConfig& config, std::size_t threads = 1);

/// INFLOW_THREADS, defaulting to 1.
std::size_t threads_from_env();

}  // namespace inflow
