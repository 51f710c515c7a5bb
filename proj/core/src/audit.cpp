#include "hitl/audit.hpp"

#include "hitl/error.hpp"
#include "hitl/text_util.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <unistd.h>

namespace hitl {

using nlohmann::json;

std::string_view to_string(EventKind k) noexcept {
  switch (k) {
  case EventKind::run_started: return "run-started";
  case EventKind::call: return "call";
  case EventKind::parse: return "parse";
  case EventKind::checkpoint_opened: return "checkpoint-opened";
  case EventKind::decision: return "decision";
  case EventKind::stage_complete: return "stage-complete";
  case EventKind::error: return "error";
  }
  return "error";
}

std::optional<EventKind> parse_event_kind(std::string_view s) noexcept {
  for (auto k : {EventKind::run_started, EventKind::call, EventKind::parse,
                 EventKind::checkpoint_opened, EventKind::decision,
                 EventKind::stage_complete, EventKind::error})
    if (to_string(k) == s)
      return k;
  return std::nullopt;
}

void to_json(json &j, const AuditEvent &v) {
  j = json{{"run_id", v.run_id},
           {"seq", v.seq},
           {"kind", to_string(v.kind)},
           {"timestamp", v.timestamp},
           {"payload", v.payload}};
}

void from_json(const json &j, AuditEvent &v) {
  v.run_id = j.at("run_id").get<std::string>();
  v.seq = j.at("seq").get<std::uint64_t>();
  auto kind = parse_event_kind(j.at("kind").get<std::string>());
  if (!kind)
    throw Error(Errc::corrupt_audit, "unknown event kind " + j.at("kind").dump());
  v.kind = *kind;
  v.timestamp = j.value("timestamp", std::string{});
  v.payload = j.value("payload", json::object());
}

void verify_trail(const std::vector<AuditEvent> &trail) {
  for (std::size_t i = 0; i < trail.size(); ++i) {
    if (trail[i].seq != i + 1)
      throw Error(Errc::corrupt_audit, "expected seq " + std::to_string(i + 1) +
                                           ", found " + std::to_string(trail[i].seq));
    if (trail[i].run_id != trail.front().run_id)
      throw Error(Errc::corrupt_audit, "event " + std::to_string(i + 1) +
                                           " belongs to run " + trail[i].run_id);
  }
}

std::vector<AuditEvent> parse_trail(std::string_view jsonl, std::string_view origin) {
  std::vector<AuditEvent> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    auto line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
    ++line_no;
    if (text::trim(line).empty())
      continue;
    try {
      out.push_back(json::parse(line).get<AuditEvent>());
    } catch (const json::exception &e) {
      throw Error(Errc::corrupt_audit, std::string(origin) + ":" + std::to_string(line_no) +
                                           ": " + e.what());
    }
  }
  verify_trail(out);
  return out;
}

AuditWriter::AuditWriter(std::filesystem::path path, std::string run_id,
                         std::uint64_t last_seq)
    : path_(std::move(path)), run_id_(std::move(run_id)), seq_(last_seq) {
  if (path_.has_parent_path())
    std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0)
    throw Error(Errc::io_error, "cannot open audit trail " + path_.string() + ": " +
                                    std::strerror(errno));
}

AuditWriter::~AuditWriter() {
  if (fd_ >= 0) {
    ::fsync(fd_);
    ::close(fd_);
  }
}

AuditEvent AuditWriter::append(EventKind kind, json payload) {
  std::lock_guard lock(mutex_);
  AuditEvent ev{run_id_, seq_ + 1, kind, text::utc_timestamp(), std::move(payload)};
  std::string line = json(ev).dump() + "\n";
  const char *p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    auto n = ::write(fd_, p, left);
    if (n < 0) {
      if (errno == EINTR)
        continue;
      throw Error(Errc::io_error, "audit append failed: " + std::string(std::strerror(errno)));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (kind == EventKind::decision && ::fsync(fd_) != 0)
    throw Error(Errc::io_error, "audit fsync failed: " + std::string(std::strerror(errno)));
  ++seq_;
  return ev;
}

std::uint64_t AuditWriter::last_seq() const {
  std::lock_guard lock(mutex_);
  return seq_;
}

AuditStore::AuditStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path AuditStore::path_for(std::string_view run_id) const {
  return dir_ / (std::string(run_id) + ".jsonl");
}

bool AuditStore::exists(std::string_view run_id) const {
  return std::filesystem::exists(path_for(run_id));
}

std::vector<std::string> AuditStore::run_ids() const {
  std::vector<std::string> out;
  for (const auto &entry : std::filesystem::directory_iterator(dir_))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
      out.push_back(entry.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<AuditEvent> AuditStore::load(std::string_view run_id) const {
  auto path = path_for(run_id);
  if (!std::filesystem::exists(path))
    throw Error(Errc::unknown_run, "no audit trail for run " + std::string(run_id));
  auto trail = parse_trail(text::read_file(path), path.string());
  if (!trail.empty() && trail.front().run_id != run_id)
    throw Error(Errc::corrupt_audit, path.string() + " holds run " + trail.front().run_id);
  return trail;
}

std::unique_ptr<AuditWriter> AuditStore::writer(std::string_view run_id) const {
  std::uint64_t last = 0;
  if (exists(run_id)) {
    auto trail = load(run_id);
    last = trail.empty() ? 0 : trail.back().seq;
  }
  return std::make_unique<AuditWriter>(path_for(run_id), std::string(run_id), last);
}

} // namespace hitl
