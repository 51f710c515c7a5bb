#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hitl {

enum class EventKind {
  run_started,
  call,
  parse,
  checkpoint_opened,
  decision,
  stage_complete,
  error,
};

std::string_view to_string(EventKind k) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view s) noexcept;

struct AuditEvent {
  std::string run_id;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::call;
  std::string timestamp;
  nlohmann::json payload = nlohmann::json::object();
};

void to_json(nlohmann::json &j, const AuditEvent &v);
void from_json(const nlohmann::json &j, AuditEvent &v);

// Throws Error(corrupt_audit) unless seq runs 1, 2, 3, ... and every event
// carries the same run id.
void verify_trail(const std::vector<AuditEvent> &trail);

// JSON lines -> events, verified. `origin` only labels error messages.
std::vector<AuditEvent> parse_trail(std::string_view jsonl, std::string_view origin = {});

// Single writer for one run's trail file. Appends are serialized; decision
// events are fsync'ed before append() returns.
class AuditWriter {
 public:
  AuditWriter(std::filesystem::path path, std::string run_id, std::uint64_t last_seq);
  ~AuditWriter();

  AuditWriter(const AuditWriter &) = delete;
  AuditWriter &operator=(const AuditWriter &) = delete;

  AuditEvent append(EventKind kind, nlohmann::json payload);
  std::uint64_t last_seq() const;
  const std::string &run_id() const noexcept { return run_id_; }

 private:
  std::filesystem::path path_;
  std::string run_id_;
  mutable std::mutex mutex_;
  std::uint64_t seq_;
  int fd_ = -1;
};

// Directory holding one `<run_id>.jsonl` trail per run.
class AuditStore {
 public:
  explicit AuditStore(std::filesystem::path dir);

  const std::filesystem::path &dir() const noexcept { return dir_; }
  std::filesystem::path path_for(std::string_view run_id) const;
  bool exists(std::string_view run_id) const;
  std::vector<std::string> run_ids() const;

  // Throws Error(unknown_run) or Error(corrupt_audit).
  std::vector<AuditEvent> load(std::string_view run_id) const;
  std::unique_ptr<AuditWriter> writer(std::string_view run_id) const;

 private:
  std::filesystem::path dir_;
};

} // namespace hitl
