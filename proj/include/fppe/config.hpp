#pragma once

#include "fppe/experiments.hpp"

#include <string>

namespace fppe {

/// Reads a run configuration from JSON text. Keys mirror the RunConfig field
/// names; missing keys keep their defaults and unknown keys are rejected.
/// Every problem surfaces as ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Fully resolved configuration as compact JSON with sorted keys. The seed
/// and output directory are left out so that they do not change the hash.
std::string canonical_config(const RunConfig& cfg);

/// 64-bit FNV-1a of the canonical form, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace fppe
