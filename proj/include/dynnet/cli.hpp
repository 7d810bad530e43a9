#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace dynnet::cli {

// Exit codes: 0 success (including diverged-but-recorded runs), 1 usage or
// configuration error, 2 data error, 3 internal invariant violation.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

// Built-in defaults for every section; files and --set overrides merge on top.
nlohmann::json default_config();

// Deep-merge `overlay` onto `base` (objects merge recursively, everything
// else replaces).
void merge_config(nlohmann::json& base, const nlohmann::json& overlay);

// Applies one dotted-key override, e.g. "model.dt=5" or "data.kind=csv".
// Values parse as JSON when possible and fall back to strings.
void apply_override(nlohmann::json& config, const std::string& key_equals_value);

}  // namespace dynnet::cli
