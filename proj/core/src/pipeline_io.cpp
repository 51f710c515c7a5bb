#include "hitl/pipeline_io.hpp"

#include "hitl/error.hpp"
#include "hitl/text_util.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>

namespace hitl {

using nlohmann::json;

namespace {

json scalar_to_json(const YAML::Node &node) {
  const std::string &s = node.Scalar();
  if (node.Tag() == "!")
    return s; // quoted
  if (s == "~" || s == "null" || s == "Null" || s == "NULL")
    return nullptr;
  if (s == "true" || s == "True" || s == "TRUE")
    return true;
  if (s == "false" || s == "False" || s == "FALSE")
    return false;
  if (!s.empty()) {
    long long i = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
    if (ec == std::errc{} && p == s.data() + s.size())
      return i;
    bool numeric_shape = s.find_first_not_of("0123456789.-+eE") == std::string::npos &&
                         s.find_first_of("0123456789") != std::string::npos;
    if (numeric_shape) {
      try {
        std::size_t used = 0;
        double d = std::stod(s, &used);
        if (used == s.size())
          return d;
      } catch (const std::exception &) {
      }
    }
  }
  return s;
}

json node_to_json(const YAML::Node &node) {
  switch (node.Type()) {
  case YAML::NodeType::Null:
  case YAML::NodeType::Undefined:
    return nullptr;
  case YAML::NodeType::Scalar:
    return scalar_to_json(node);
  case YAML::NodeType::Sequence: {
    json arr = json::array();
    for (const auto &child : node)
      arr.push_back(node_to_json(child));
    return arr;
  }
  case YAML::NodeType::Map: {
    json obj = json::object();
    for (const auto &kv : node)
      obj[kv.first.as<std::string>()] = node_to_json(kv.second);
    return obj;
  }
  }
  return nullptr;
}

// Stringifies scalars that YAML typed as numbers where the schema wants text
// (e.g. a dimension list of "1", "2").
void stringify(json &j) {
  if (j.is_number())
    j = j.dump();
  else if (j.is_array())
    for (auto &e : j)
      stringify(e);
}

json normalize_stage(json stage, const std::filesystem::path &base_dir) {
  if (stage.contains("prompt")) {
    auto &prompt = stage["prompt"];
    if (prompt.is_string())
      prompt = json{{"text", prompt}};
    if (prompt.contains("file")) {
      auto path = std::filesystem::path(prompt["file"].get<std::string>());
      if (path.is_relative())
        path = base_dir / path;
      prompt["text"] = text::read_file(path);
      prompt.erase("file");
    }
  }
  if (stage.contains("checkpoint") && stage["checkpoint"].is_object()) {
    auto cp = stage["checkpoint"];
    stage["checkpoint"] = true;
    if (cp.contains("approves"))
      stage["approves"] = cp["approves"];
  }
  if (stage.contains("contract") && stage["contract"].is_string())
    stage["contract"] = json{{"kind", stage["contract"]}};
  if (stage.contains("fanout") && stage["fanout"].is_object() &&
      stage["fanout"].contains("dimensions"))
    stringify(stage["fanout"]["dimensions"]);
  if (stage.contains("bindings") && stage["bindings"].is_null())
    stage.erase("bindings");
  return stage;
}

} // namespace

json yaml_to_json(std::string_view yaml) {
  try {
    return node_to_json(YAML::Load(std::string(yaml)));
  } catch (const YAML::Exception &e) {
    throw Error(Errc::config_error, std::string("YAML parse error: ") + e.what());
  }
}

json load_structured(const std::filesystem::path &path) {
  auto contents = text::read_file(path);
  if (path.extension() == ".json") {
    try {
      return json::parse(contents);
    } catch (const json::exception &e) {
      throw Error(Errc::config_error, path.string() + ": " + e.what());
    }
  }
  return yaml_to_json(contents);
}

PipelineSpec parse_pipeline(std::string_view yaml,
                            const std::filesystem::path &base_dir) {
  json doc = yaml_to_json(yaml);
  if (!doc.is_object())
    throw Error(Errc::config_error, "pipeline file must be a mapping");
  if (doc.contains("stages") && doc["stages"].is_array())
    for (auto &stage : doc["stages"])
      stage = normalize_stage(std::move(stage), base_dir);
  if (doc.contains("edges") && doc["edges"].is_array()) {
    for (auto &e : doc["edges"]) {
      if (e.is_object())
        e = json::array({e.at("from"), e.at("to")});
    }
  }
  if (doc.contains("metadata") && doc["metadata"].is_object())
    for (auto &[k, v] : doc["metadata"].items())
      if (!v.is_string())
        v = v.dump();
  try {
    return doc.get<PipelineSpec>();
  } catch (const json::exception &e) {
    throw Error(Errc::config_error, std::string("pipeline schema error: ") + e.what());
  }
}

PipelineSpec load_pipeline(const std::filesystem::path &path) {
  return parse_pipeline(text::read_file(path), path.parent_path());
}

RunParams parse_run_params(const json &j) {
  try {
    return j.get<RunParams>();
  } catch (const json::exception &e) {
    throw Error(Errc::config_error, std::string("run params: ") + e.what());
  }
}

} // namespace hitl
