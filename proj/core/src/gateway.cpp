#include "hitl/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace hitl {

using nlohmann::json;

json build_request_body(const std::string &provider, const CompletionRequest &request) {
  json messages = json::array();
  for (const auto &m : request.messages)
    messages.push_back(json{{"role", to_string(m.role)}, {"content", m.content}});

  const auto &p = request.params;
  json body{{"model", p.model}, {"messages", messages}};
  if (p.temperature)
    body["temperature"] = *p.temperature;

  if (provider == "openai") {
    if (p.reasoning_effort)
      body["reasoning_effort"] = to_string(*p.reasoning_effort);
    if (p.verbosity)
      body["verbosity"] = to_string(*p.verbosity);
    if (p.max_output)
      body["max_completion_tokens"] = *p.max_output;
  } else if (provider == "deepseek") {
    // reasoning models there take no effort knob
    if (p.max_output)
      body["max_tokens"] = *p.max_output;
  } else if (provider == "generic") {
    if (p.reasoning_effort)
      body["reasoning_effort"] = to_string(*p.reasoning_effort);
    if (p.max_output)
      body["max_tokens"] = *p.max_output;
  } else {
    throw Error(Errc::config_error, "unknown provider adapter '" + provider + "'");
  }
  return body;
}

CompletionResponse parse_response_body(const std::string &provider,
                                       const std::string &body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception &e) {
    throw ProviderError(200, body, std::string("unparseable provider response: ") + e.what());
  }
  CompletionResponse out;
  try {
    const auto &choice = doc.at("choices").at(0);
    const auto &message = choice.at("message");
    if (message.contains("content") && message.at("content").is_string())
      out.text = message.at("content").get<std::string>();
    json meta = json::object();
    meta["provider"] = provider;
    if (doc.contains("id"))
      meta["id"] = doc["id"];
    if (doc.contains("model"))
      meta["model"] = doc["model"];
    if (choice.contains("finish_reason"))
      meta["finish_reason"] = choice["finish_reason"];
    if (message.contains("reasoning_content") && message["reasoning_content"].is_string())
      meta["reasoning_content"] = message["reasoning_content"];
    out.provider_meta = std::move(meta);
    if (doc.contains("usage") && doc["usage"].is_object()) {
      const auto &u = doc["usage"];
      out.usage = Usage{u.value("prompt_tokens", 0), u.value("completion_tokens", 0),
                        u.value("total_tokens", 0)};
    }
  } catch (const json::exception &e) {
    throw ProviderError(200, body, std::string("unexpected provider response shape: ") + e.what());
  }
  return out;
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.max_in_flight = std::max(1, config_.max_in_flight);
}

CompletionResponse Gateway::call_with_retries(const CompletionRequest &request) {
  if (!transport_)
    throw Error(Errc::config_error, "no transport configured for live calls");

  HttpRequest http;
  http.base_url = config_.base_url;
  http.path = config_.path;
  http.timeout = config_.timeout;
  http.body = build_request_body(config_.provider, request).dump();
  if (!config_.api_key_env.empty()) {
    const char *key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key)
      throw Error(Errc::config_error,
                  "environment variable " + config_.api_key_env + " is not set");
    http.headers.emplace_back(config_.auth_header, config_.auth_prefix + key);
  }

  HttpResponse last;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0 && config_.backoff_base.count() > 0)
      std::this_thread::sleep_for(config_.backoff_base * (1 << (attempt - 1)));
    auto started = std::chrono::steady_clock::now();
    ++network_calls_;
    last = transport_->post(http);
    auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);

    if (last.failure == HttpResponse::Failure::none && last.status >= 200 &&
        last.status < 300) {
      auto out = parse_response_body(config_.provider, last.body);
      out.latency = latency;
      return out;
    }
    bool retryable = last.failure != HttpResponse::Failure::none ||
                     last.status == 429 || last.status >= 500;
    if (!retryable)
      throw ProviderError(last.status, last.body,
                          "provider returned HTTP " + std::to_string(last.status));
  }
  if (last.failure == HttpResponse::Failure::timeout)
    throw Error(Errc::timeout, "request timed out after " +
                                   std::to_string(config_.max_retries) + " retries");
  throw ProviderError(last.status, last.body,
                      last.failure == HttpResponse::Failure::connection
                          ? "connection failed: " + last.body
                          : "provider returned HTTP " + std::to_string(last.status) +
                                " after " + std::to_string(config_.max_retries) +
                                " retries");
}

CompletionResponse Gateway::complete(const CompletionRequest &request,
                                     Cassette &cassette) {
  bool has_user = std::any_of(request.messages.begin(), request.messages.end(),
                              [](const Message &m) { return m.role == Role::user; });
  if (!has_user)
    throw Error(Errc::config_error, "a completion request needs a user message");

  auto key = request.idempotency_key();
  if (cassette.mode() == CassetteMode::replay) {
    auto entry = cassette.find(key);
    if (!entry)
      throw Error(Errc::replay_miss, "no cassette entry for key " + key);
    if (entry->error)
      entry->error->raise();
    if (!entry->response)
      throw Error(Errc::replay_miss, "cassette entry " + key + " has no response");
    return *entry->response;
  }

  auto record = [&](std::optional<CompletionResponse> response,
                    std::optional<SlotError> error) {
    if (cassette.mode() != CassetteMode::record)
      return;
    cassette.put(CassetteEntry{key, request.request_digest(), request.to_json(),
                               std::move(response), std::move(error)});
  };

  try {
    auto response = call_with_retries(request);
    record(response, std::nullopt);
    return response;
  } catch (const ProviderError &e) {
    record(std::nullopt, SlotError{Errc::provider_error, e.status(), e.what(), e.body()});
    throw;
  } catch (const Error &e) {
    if (e.code() == Errc::timeout)
      record(std::nullopt, SlotError{Errc::timeout, 0, e.what(), {}});
    throw;
  }
}

std::vector<SlotResult> Gateway::complete_all(std::span<const CompletionRequest> requests,
                                              Cassette &cassette,
                                              const SlotCallback &on_done) {
  std::vector<SlotResult> results(requests.size());
  if (requests.empty())
    return results;

  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= requests.size())
        return;
      SlotResult slot;
      try {
        slot.response = complete(requests[i], cassette);
      } catch (const ProviderError &e) {
        slot.error = SlotError{Errc::provider_error, e.status(), e.what(), e.body()};
      } catch (const Error &e) {
        slot.error = SlotError{e.code(), 0, e.what(), {}};
      } catch (const std::exception &e) {
        slot.error = SlotError{Errc::provider_error, 0, e.what(), {}};
      }
      results[i] = slot;
      if (on_done) {
        std::lock_guard lock(callback_mutex);
        on_done(i, results[i]);
      }
    }
  };

  std::size_t threads =
      std::min<std::size_t>(requests.size(), static_cast<std::size_t>(config_.max_in_flight));
  if (threads <= 1) {
    worker();
    return results;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back(worker);
  pool.clear(); // joins
  return results;
}

std::vector<SlotResult> Gateway::fan_out(const CompletionRequest &request, int n,
                                         Cassette &cassette) {
  if (n < 1)
    throw Error(Errc::config_error, "fan_out needs n >= 1");
  std::vector<CompletionRequest> requests;
  requests.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    auto r = request;
    r.attempt = i;
    requests.push_back(std::move(r));
  }
  return complete_all(requests, cassette);
}

} // namespace hitl
