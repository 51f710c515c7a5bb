#pragma once

#include <hitl/cassette.hpp>
#include <hitl/gateway.hpp>
#include <hitl/model.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace hitl::cli {

// Values given on the command line; unset fields fall through to the
// environment and then to the config file.
struct CliOverrides {
  std::optional<std::string> config_file;
  std::optional<std::string> provider;
  std::optional<std::string> base_url;
  std::optional<std::string> api_key_env;
  std::optional<std::string> cassette;
  std::optional<std::string> mode;
  std::optional<std::string> audit_dir;
  std::optional<int> parallelism;
  std::optional<int> timeout_s;
  std::optional<std::string> model;
  std::optional<std::string> reasoning_effort;
  std::optional<std::string> verbosity;
  std::optional<double> temperature;
  std::optional<std::string> data_dir;
};

struct CliConfig {
  GatewayConfig gateway;
  std::optional<std::filesystem::path> cassette_path;
  CassetteMode mode = CassetteMode::live;
  std::filesystem::path audit_dir = ".hitl/audit";
  std::filesystem::path data_dir;
  RunParams params;
  // Where each effective value came from, for run metadata.
  nlohmann::json sources = nlohmann::json::object();
};

// Precedence: flags > HITL_* environment > config file > defaults.
// Throws Error(config_error).
CliConfig resolve_config(const CliOverrides &flags);

} // namespace hitl::cli
