#pragma once

#include "hitl/cassette.hpp"
#include "hitl/transport.hpp"

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hitl {

struct GatewayConfig {
  // Adapter that shapes the JSON body: "openai", "deepseek" or "generic"
  // (any other chat-completions compatible server).
  std::string provider = "openai";
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  // Credentials only ever come from this environment variable.
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{120000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  int max_in_flight = 8;
};

// Outcome of one fan-out slot: a response or a per-slot error.
struct SlotResult {
  std::optional<CompletionResponse> response;
  std::optional<SlotError> error;

  bool ok() const noexcept { return response.has_value(); }
};

nlohmann::json build_request_body(const std::string &provider,
                                  const CompletionRequest &request);
CompletionResponse parse_response_body(const std::string &provider,
                                       const std::string &body);

class Gateway {
 public:
  Gateway(GatewayConfig config, std::shared_ptr<Transport> transport);

  // One request. Replay mode serves from the cassette and never touches the
  // transport; record mode persists the outcome (response or final error)
  // before returning. Throws Error(replay_miss), ProviderError or
  // Error(timeout).
  CompletionResponse complete(const CompletionRequest &request, Cassette &cassette);

  // n copies of `request` with attempt indices 1..n. Result order follows the
  // attempt index, not completion order; one slot failing never aborts the
  // others.
  std::vector<SlotResult> fan_out(const CompletionRequest &request, int n,
                                  Cassette &cassette);

  using SlotCallback = std::function<void(std::size_t, const SlotResult &)>;

  // Runs heterogeneous requests under the in-flight cap. `on_done` is
  // invoked once per slot as it finishes, never concurrently with itself.
  std::vector<SlotResult> complete_all(std::span<const CompletionRequest> requests,
                                       Cassette &cassette,
                                       const SlotCallback &on_done = {});

  const GatewayConfig &config() const noexcept { return config_; }
  // HTTP round-trips issued so far (retries included).
  std::size_t network_calls() const noexcept { return network_calls_.load(); }

 private:
  CompletionResponse call_with_retries(const CompletionRequest &request);

  GatewayConfig config_;
  std::shared_ptr<Transport> transport_;
  std::atomic<std::size_t> network_calls_{0};
};

} // namespace hitl
