#pragma once

#include <hitl/gateway.hpp>
#include <hitl/orchestrator.hpp>

#include <nlohmann/json.hpp>

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hitl::test {

inline std::filesystem::path data_dir() { return HITL_TEST_DATA_DIR; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hitl-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string chat_body(const std::string &text) {
  nlohmann::json body{
      {"choices", nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})},
      {"usage", {{"prompt_tokens", 1}, {"completion_tokens", 1}, {"total_tokens", 2}}}};
  return body.dump();
}

// In-process provider answering from a callback keyed on the prompt.
class ScriptedProvider {
 public:
  using Reply = std::function<std::string(const std::string &prompt)>;

  explicit ScriptedProvider(Reply reply) : reply_(std::move(reply)) {}

  std::shared_ptr<Transport> transport() {
    return std::make_shared<FunctionTransport>([this](const HttpRequest &r) {
      auto doc = nlohmann::json::parse(r.body);
      auto prompt = doc.at("messages").back().at("content").get<std::string>();
      {
        std::lock_guard lock(mutex_);
        prompts_.push_back(prompt);
      }
      ++calls_;
      return HttpResponse{200, chat_body(reply_(prompt)), HttpResponse::Failure::none};
    });
  }

  int calls() const { return calls_.load(); }
  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }

 private:
  Reply reply_;
  std::atomic<int> calls_{0};
  mutable std::mutex mutex_;
  std::vector<std::string> prompts_;
};

inline GatewayConfig offline_config(int max_in_flight = 4) {
  GatewayConfig c;
  c.api_key_env = "";
  c.max_in_flight = max_in_flight;
  c.max_retries = 0;
  c.backoff_base = std::chrono::milliseconds(0);
  return c;
}

inline RunParams test_params() {
  RunParams p;
  p.model = "test-model";
  p.temperature = 0.0;
  return p;
}

// Random acyclic spec of free-text stages. Every stage reads each of its
// predecessors' output; some stages are checkpoints and some fan out.
inline PipelineSpec random_spec(std::mt19937 &rng, int index) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  PipelineSpec spec;
  spec.id = "random-" + std::to_string(index);
  int n = pick(2, 6);
  for (int i = 0; i < n; ++i) {
    Stage s;
    s.id = "s" + std::to_string(i);
    s.kind = StageKind::extract;
    std::string text = "Stage " + s.id + " of spec " + std::to_string(index) + ". Input {doc}.";
    for (int j = 0; j < i; ++j) {
      if (pick(0, 2) == 0)
        continue;
      auto from = "s" + std::to_string(j);
      text += " Prior {p" + std::to_string(j) + "}.";
      s.bindings["p" + std::to_string(j)] = "stage." + from;
      spec.edges.push_back({from, s.id});
    }
    s.prompt = PromptTemplate::from_text(text);
    s.contract.kind = ContractKind::free_text;
    s.runs = pick(1, 3);
    if (i + 1 < n && pick(0, 1) == 1) {
      s.checkpoint = true;
      s.approves = ApprovalTarget::parsed_output;
    }
    spec.stages.push_back(std::move(s));
  }
  // last stage is a sink by construction
  spec.report_stage = spec.stages.back().id;
  return spec;
}

inline std::string echo_reply(const std::string &prompt) {
  return "Output for: " + prompt.substr(0, 40);
}

// A call for a stage below a checkpoint is only legal once the latest
// decision on that checkpoint opens it. Returns the first offence, or empty.
inline std::string gate_violation(const PipelineSpec &spec, const std::vector<AuditEvent> &trail) {
  std::map<std::string, std::string> verdict;
  for (const auto &e : trail) {
    if (e.kind == EventKind::decision)
      verdict[e.payload.at("checkpoint").get<std::string>()] =
          e.payload.at("verdict").get<std::string>();
    if (e.kind != EventKind::call)
      continue;
    auto stage = e.payload.at("stage").get<std::string>();
    for (const auto &s : spec.stages) {
      if (!s.checkpoint || !spec.is_ancestor(s.id, stage))
        continue;
      auto it = verdict.find(s.id);
      if (it == verdict.end() || it->second == "reject")
        return "call for " + stage + " at seq " + std::to_string(e.seq) +
               " while " + s.id + " is closed";
    }
  }
  return {};
}

} // namespace hitl::test

namespace hitl::test {

// Code of the hitl::Error thrown by `f`, or nullopt when it returns normally.
template <class F>
std::optional<Errc> errc_of(F &&f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  return std::nullopt;
}

} // namespace hitl::test
