#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "inflow/tape.hpp"

namespace inflow {

/**
 * Checkpoint layout:
 *   8 bytes   magic "INFLOWCK"
 *   8 bytes   header length N, little-endian uint64
 *   N bytes   JSON header {"format", "version", "params": [{name, offset, shape}], "meta"}
 *   payload   little-endian float64 values; offsets count bytes from the payload start
 */
void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params,
                     const nlohmann::json& meta = nlohmann::json::object());

/// Loads values into `params` by name. Every parameter must be present with a
/// matching shape; mismatches name the parameter. Returns the header meta.
nlohmann::json load_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params);

/// Header only.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace inflow
