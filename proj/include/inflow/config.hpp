#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "inflow/data.hpp"
#include "inflow/flow.hpp"
#include "inflow/forecasters.hpp"
#include "inflow/training.hpp"

namespace inflow {

enum class Variant { inflow, inflow_t, inflow_j, realnvp, realnvp_c, revin, none };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
/// The seven variants of an ablation sweep, in table order.
const std::vector<Variant>& ablation_roster();

struct DatasetSection {
    /// "synthetic" or "csv".
    std::string source = "synthetic";
    std::string preset = "synthetic-1";
    SyntheticConfig synthetic = SyntheticConfig::preset("synthetic-1");
    std::string csv_path;
    std::vector<std::string> columns;
    SplitRatios ratios;
    bool zscore = true;
};

struct ModelSection {
    Variant variant = Variant::inflow;
    std::size_t blocks = 2;
    FlowOptions flow;
    ForecasterConfig backbone;
    /// Train RevIN with the alternating scheme instead of jointly.
    bool revin_bilevel = false;
};

struct RunConfig {
    DatasetSection dataset;
    ModelSection model;
    TrainConfig train;
    /// Set when the config states a mode explicitly; checked against the variant.
    std::optional<TrainMode> requested_mode;
    std::size_t stride = 1;
    std::filesystem::path output_dir = "runs";
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4};

    /// Mode implied by the variant.
    TrainMode resolved_mode() const;
    /// Throws ConfigError on inconsistent settings.
    void validate() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);

    /// Hash of every setting that affects results (the output directory is excluded).
    std::string content_hash() const;
};

/// Git blob id: SHA-1 of "blob <size>\0" followed by the content, hex encoded.
std::string git_blob_hash(const std::string& content);

}  // namespace inflow
