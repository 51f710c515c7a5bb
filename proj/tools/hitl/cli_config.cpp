#include "cli_config.hpp"

#include <hitl/error.hpp>
#include <hitl/pipeline_io.hpp>

#include <cstdlib>

namespace hitl::cli {

using nlohmann::json;

namespace {

std::optional<std::string> env(const char *name) {
  const char *v = std::getenv(name);
  if (!v || !*v)
    return std::nullopt;
  return std::string(v);
}

class Resolver {
 public:
  Resolver(json file, json &sources) : file_(std::move(file)), sources_(sources) {}

  std::optional<std::string> text(const std::string &key, const std::optional<std::string> &flag,
                                  const char *env_name) {
    if (flag) {
      sources_[key] = "flag";
      return flag;
    }
    if (auto e = env(env_name)) {
      sources_[key] = std::string("env:") + env_name;
      return e;
    }
    const json *node = lookup(key);
    if (node && !node->is_null()) {
      sources_[key] = "config";
      return node->is_string() ? node->get<std::string>() : node->dump();
    }
    return std::nullopt;
  }

 private:
  const json *lookup(const std::string &key) const {
    const json *cur = &file_;
    std::size_t start = 0;
    while (true) {
      auto dot = key.find('.', start);
      auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!cur->is_object() || !cur->contains(part))
        return nullptr;
      cur = &(*cur)[part];
      if (dot == std::string::npos)
        return cur;
      start = dot + 1;
    }
  }

  json file_;
  json &sources_;
};

int to_int(const std::string &key, const std::string &v) {
  try {
    std::size_t used = 0;
    int n = std::stoi(v, &used);
    if (used != v.size())
      throw std::invalid_argument(v);
    return n;
  } catch (const std::exception &) {
    throw Error(Errc::config_error, key + ": '" + v + "' is not an integer");
  }
}

double to_double(const std::string &key, const std::string &v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size())
      throw std::invalid_argument(v);
    return d;
  } catch (const std::exception &) {
    throw Error(Errc::config_error, key + ": '" + v + "' is not a number");
  }
}

Effort to_effort(const std::string &key, const std::string &v) {
  auto e = parse_effort(v);
  if (!e)
    throw Error(Errc::config_error, key + ": '" + v + "' is not low|medium|high");
  return *e;
}

} // namespace

CliConfig resolve_config(const CliOverrides &flags) {
  CliConfig c;
  json file = json::object();
  std::optional<std::string> path = flags.config_file ? flags.config_file : env("HITL_CONFIG");
  if (path) {
    if (!std::filesystem::exists(*path))
      throw Error(Errc::config_error, "config file " + *path + " does not exist");
    file = load_structured(*path);
    if (!file.is_object())
      throw Error(Errc::config_error, "config file " + *path + " must be a mapping");
  }
  Resolver r(file, c.sources);

  if (auto v = r.text("provider", flags.provider, "HITL_PROVIDER"))
    c.gateway.provider = *v;
  if (c.gateway.provider == "deepseek") {
    c.gateway.base_url = "https://api.deepseek.com";
    c.gateway.path = "/chat/completions";
    c.gateway.api_key_env = "DEEPSEEK_API_KEY";
  }
  if (auto v = r.text("base_url", flags.base_url, "HITL_BASE_URL"))
    c.gateway.base_url = *v;
  if (auto v = r.text("api_key_env", flags.api_key_env, "HITL_API_KEY_ENV"))
    c.gateway.api_key_env = *v;
  if (auto v = r.text("parallelism",
                      flags.parallelism ? std::optional(std::to_string(*flags.parallelism))
                                        : std::nullopt,
                      "HITL_PARALLELISM"))
    c.gateway.max_in_flight = to_int("parallelism", *v);
  if (c.gateway.max_in_flight < 1)
    throw Error(Errc::config_error, "parallelism must be at least 1");
  if (auto v = r.text("timeout_s",
                      flags.timeout_s ? std::optional(std::to_string(*flags.timeout_s))
                                      : std::nullopt,
                      "HITL_TIMEOUT_S")) {
    int s = to_int("timeout_s", *v);
    if (s < 1)
      throw Error(Errc::config_error, "timeout_s must be positive");
    c.gateway.timeout = std::chrono::seconds(s);
  }

  if (auto v = r.text("cassette", flags.cassette, "HITL_CASSETTE"))
    c.cassette_path = *v;
  if (auto v = r.text("mode", flags.mode, "HITL_CASSETTE_MODE")) {
    auto m = parse_cassette_mode(*v);
    if (!m)
      throw Error(Errc::config_error, "mode '" + *v + "' is not live|record|replay");
    c.mode = *m;
  } else if (c.cassette_path) {
    c.mode = CassetteMode::replay;
  }
  if (c.mode != CassetteMode::live && !c.cassette_path)
    throw Error(Errc::config_error,
                std::string(to_string(c.mode)) + " mode needs a cassette path");
  // Replay never reaches the network, so no credential is required.
  if (c.mode == CassetteMode::replay)
    c.gateway.api_key_env.clear();

  if (auto v = r.text("audit_dir", flags.audit_dir, "HITL_AUDIT_DIR"))
    c.audit_dir = *v;
  if (auto v = r.text("data_dir", flags.data_dir, "HITL_DATA_DIR"))
    c.data_dir = *v;
  else
    c.data_dir = HITL_DEFAULT_DATA_DIR;

  if (file.contains("params"))
    c.params = parse_run_params(file["params"]);
  if (auto v = r.text("params.model", flags.model, "HITL_MODEL"))
    c.params.model = *v;
  if (auto v = r.text("params.reasoning_effort", flags.reasoning_effort, "HITL_REASONING_EFFORT"))
    c.params.reasoning_effort = to_effort("reasoning_effort", *v);
  if (auto v = r.text("params.verbosity", flags.verbosity, "HITL_VERBOSITY"))
    c.params.verbosity = to_effort("verbosity", *v);
  if (auto v = r.text("params.temperature",
                      flags.temperature ? std::optional(std::to_string(*flags.temperature))
                                        : std::nullopt,
                      "HITL_TEMPERATURE"))
    c.params.temperature = to_double("temperature", *v);
  return c;
}

} // namespace hitl::cli
