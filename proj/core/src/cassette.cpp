#include "hitl/cassette.hpp"

#include "hitl/digest.hpp"

#include <sstream>

namespace hitl {

using nlohmann::json;

std::string_view to_string(Role r) noexcept {
  switch (r) {
  case Role::system: return "system";
  case Role::user: return "user";
  case Role::assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view s) noexcept {
  if (s == "system")
    return Role::system;
  if (s == "user")
    return Role::user;
  if (s == "assistant")
    return Role::assistant;
  return std::nullopt;
}

namespace {
json messages_json(const std::vector<Message> &messages) {
  json arr = json::array();
  for (const auto &m : messages)
    arr.push_back(json{{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}
} // namespace

json CompletionRequest::to_json() const {
  return json{{"params", params}, {"messages", messages_json(messages)},
              {"attempt", attempt}};
}

std::string CompletionRequest::idempotency_key() const {
  return sha256_hex(to_json().dump());
}

std::string CompletionRequest::request_digest() const {
  return sha256_hex(
      json{{"params", params}, {"messages", messages_json(messages)}}.dump());
}

void SlotError::raise() const {
  if (code == Errc::provider_error)
    throw ProviderError(status, body, message);
  throw Error(code, message);
}

void to_json(json &j, const CompletionResponse &v) {
  j = json{{"text", v.text},
           {"provider_meta", v.provider_meta},
           {"latency_ms", v.latency.count()}};
  if (v.usage)
    j["usage"] = json{{"prompt_tokens", v.usage->prompt_tokens},
                      {"completion_tokens", v.usage->completion_tokens},
                      {"total_tokens", v.usage->total_tokens}};
}

void from_json(const json &j, CompletionResponse &v) {
  v.text = j.at("text").get<std::string>();
  v.provider_meta = j.value("provider_meta", json::object());
  v.latency = std::chrono::milliseconds(j.value("latency_ms", 0));
  v.usage.reset();
  if (j.contains("usage") && j.at("usage").is_object()) {
    const auto &u = j.at("usage");
    v.usage = Usage{u.value("prompt_tokens", 0), u.value("completion_tokens", 0),
                    u.value("total_tokens", 0)};
  }
}

void to_json(json &j, const SlotError &v) {
  j = json{{"code", to_string(v.code)},
           {"status", v.status},
           {"message", v.message},
           {"body", v.body}};
}

void from_json(const json &j, SlotError &v) {
  auto code = j.value("code", std::string("provider-error"));
  v.code = Errc::provider_error;
  for (auto c : {Errc::provider_error, Errc::timeout, Errc::replay_miss,
                 Errc::config_error})
    if (to_string(c) == code)
      v.code = c;
  v.status = j.value("status", 0);
  v.message = j.value("message", std::string{});
  v.body = j.value("body", std::string{});
}

void to_json(json &j, const CassetteEntry &v) {
  j = json{{"key", v.key}, {"request_digest", v.request_digest}};
  if (!v.request.is_null())
    j["request"] = v.request;
  if (v.response)
    j["response"] = *v.response;
  if (v.error)
    j["error"] = *v.error;
}

void from_json(const json &j, CassetteEntry &v) {
  v.key = j.at("key").get<std::string>();
  v.request_digest = j.value("request_digest", std::string{});
  v.request = j.value("request", json());
  v.response.reset();
  v.error.reset();
  if (j.contains("response"))
    v.response = j.at("response").get<CompletionResponse>();
  if (j.contains("error"))
    v.error = j.at("error").get<SlotError>();
}

std::string_view to_string(CassetteMode m) noexcept {
  switch (m) {
  case CassetteMode::live: return "live";
  case CassetteMode::record: return "record";
  case CassetteMode::replay: return "replay";
  }
  return "live";
}

std::optional<CassetteMode> parse_cassette_mode(std::string_view s) noexcept {
  if (s == "live")
    return CassetteMode::live;
  if (s == "record")
    return CassetteMode::record;
  if (s == "replay")
    return CassetteMode::replay;
  return std::nullopt;
}

Cassette::Cassette(CassetteMode mode) : mode_(mode) {}

Cassette::Cassette(CassetteMode mode, std::filesystem::path path)
    : mode_(mode), path_(std::move(path)) {
  if (std::filesystem::exists(*path_)) {
    std::ifstream in(*path_, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty())
        continue;
      try {
        auto entry = json::parse(line).get<CassetteEntry>();
        entries_[entry.key] = std::move(entry);
      } catch (const json::exception &e) {
        throw Error(Errc::io_error, path_->string() + ":" + std::to_string(line_no) +
                                        ": bad cassette entry: " + e.what());
      }
    }
  } else if (mode_ == CassetteMode::replay) {
    throw Error(Errc::io_error, "cassette not found: " + path_->string());
  }
  if (mode_ == CassetteMode::record) {
    if (path_->has_parent_path())
      std::filesystem::create_directories(path_->parent_path());
    out_.open(*path_, std::ios::binary | std::ios::app);
    if (!out_)
      throw Error(Errc::io_error, "cannot open cassette for append: " + path_->string());
  }
}

std::optional<CassetteEntry> Cassette::find(const std::string &key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end())
    return std::nullopt;
  return it->second;
}

void Cassette::put(CassetteEntry entry) {
  std::lock_guard lock(mutex_);
  if (out_.is_open()) {
    out_ << json(entry).dump() << '\n';
    out_.flush();
  }
  entries_[entry.key] = std::move(entry);
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::vector<CassetteEntry> Cassette::entries() const {
  std::lock_guard lock(mutex_);
  std::vector<CassetteEntry> out;
  out.reserve(entries_.size());
  for (const auto &[k, e] : entries_)
    out.push_back(e);
  return out;
}

} // namespace hitl
