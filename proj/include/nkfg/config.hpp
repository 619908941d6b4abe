#pragma once

#include <filesystem>

#include <json.hpp>

#include "nkfg/sim.hpp"

namespace nkfg {

// Reads an experiment config document. Relative profile paths resolve
// against `base_dir`. A run manifest is accepted too; its embedded config
// snapshot is used. Unknown keys are rejected with a ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

// Snapshot that parse_config reads back to an equal config.
nlohmann::json config_to_json(const ExperimentConfig& config);

}  // namespace nkfg
