#pragma once

#include "hitl/error.hpp"
#include "hitl/model.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hitl {

enum class Role { system, user, assistant };
std::string_view to_string(Role r) noexcept;
std::optional<Role> parse_role(std::string_view s) noexcept;

struct Message {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const Message &, const Message &) = default;
};

struct CompletionRequest {
  RunParams params;
  std::vector<Message> messages;
  // 1-based repetition index; part of the idempotency key so repeated calls
  // with one prompt stay distinct.
  int attempt = 1;

  // SHA-256 over (params, messages, attempt).
  std::string idempotency_key() const;
  // SHA-256 over (params, messages).
  std::string request_digest() const;
  nlohmann::json to_json() const;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int total_tokens = 0;

  friend bool operator==(const Usage &, const Usage &) = default;
};

struct CompletionResponse {
  std::string text;
  std::optional<Usage> usage;
  nlohmann::json provider_meta = nlohmann::json::object();
  std::chrono::milliseconds latency{0};
};

struct SlotError {
  Errc code = Errc::provider_error;
  int status = 0;
  std::string message;
  std::string body;

  [[noreturn]] void raise() const;
};

struct CassetteEntry {
  std::string key;
  std::string request_digest;
  nlohmann::json request;
  std::optional<CompletionResponse> response;
  std::optional<SlotError> error;
};

void to_json(nlohmann::json &j, const CompletionResponse &v);
void from_json(const nlohmann::json &j, CompletionResponse &v);
void to_json(nlohmann::json &j, const SlotError &v);
void from_json(const nlohmann::json &j, SlotError &v);
void to_json(nlohmann::json &j, const CassetteEntry &v);
void from_json(const nlohmann::json &j, CassetteEntry &v);

enum class CassetteMode { live, record, replay };
std::string_view to_string(CassetteMode m) noexcept;
std::optional<CassetteMode> parse_cassette_mode(std::string_view s) noexcept;

// Request-to-response store. The file form is UTF-8 JSON lines, one entry per
// line; a later line for the same key supersedes an earlier one. Writes are
// serialized and flushed before put() returns.
class Cassette {
 public:
  explicit Cassette(CassetteMode mode);
  // Loads `path` when it exists. Replay mode requires the file.
  Cassette(CassetteMode mode, std::filesystem::path path);

  Cassette(const Cassette &) = delete;
  Cassette &operator=(const Cassette &) = delete;

  CassetteMode mode() const noexcept { return mode_; }
  const std::optional<std::filesystem::path> &path() const noexcept { return path_; }

  std::optional<CassetteEntry> find(const std::string &key) const;
  void put(CassetteEntry entry);
  std::size_t size() const;
  std::vector<CassetteEntry> entries() const;

 private:
  CassetteMode mode_;
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::map<std::string, CassetteEntry> entries_;
  std::ofstream out_;
};

} // namespace hitl
