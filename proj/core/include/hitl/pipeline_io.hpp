#pragma once

#include "hitl/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string_view>

namespace hitl {

// YAML document -> JSON value. Plain scalars become integers, reals,
// booleans or null when they read as such; quoted scalars stay strings.
nlohmann::json yaml_to_json(std::string_view yaml);

// Reads a .json file as JSON and anything else as YAML.
nlohmann::json load_structured(const std::filesystem::path &path);

// Pipeline spec file (see docs/pipeline-format.md). `prompt.file` entries are
// resolved against `base_dir`. Throws Error(config_error) on schema errors;
// structural problems are left for validate_pipeline.
PipelineSpec parse_pipeline(std::string_view yaml,
                            const std::filesystem::path &base_dir = {});
PipelineSpec load_pipeline(const std::filesystem::path &path);

RunParams parse_run_params(const nlohmann::json &j);

} // namespace hitl
