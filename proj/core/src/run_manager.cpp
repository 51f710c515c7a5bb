#include "hitl/run_manager.hpp"

#include <algorithm>

namespace hitl {

RunManager::RunManager(Orchestrator &orchestrator, Cassette &cassette)
    : orchestrator_(orchestrator), cassette_(cassette),
      worker_([this](std::stop_token stop) { worker_loop(stop); }) {}

RunManager::~RunManager() {
  worker_.request_stop();
  cv_.notify_all();
}

std::vector<std::string> RunManager::run_ids() const {
  return orchestrator_.store().run_ids();
}

RunState RunManager::state(const std::string &run_id) { return orchestrator_.state(run_id); }

PipelineSpec RunManager::spec(const std::string &run_id) { return orchestrator_.spec(run_id); }

std::vector<AuditEvent> RunManager::trail(const std::string &run_id) const {
  return orchestrator_.trail(run_id);
}

std::vector<PendingCheckpoint> RunManager::pending(const std::string &run_id) {
  auto s = state(run_id);
  auto sp = spec(run_id);
  std::vector<PendingCheckpoint> out;
  for (const auto &stage : sp.stages)
    if (s.stages.at(stage.id).status == StageStatus::awaiting_approval)
      out.push_back({run_id, stage.id});
  return out;
}

std::vector<PendingCheckpoint> RunManager::pending_all() {
  std::vector<PendingCheckpoint> out;
  for (const auto &id : run_ids()) {
    try {
      auto p = pending(id);
      out.insert(out.end(), p.begin(), p.end());
    } catch (const Error &) {
      // unreadable trails are listed by /runs, not here
    }
  }
  return out;
}

RunState RunManager::decide(const std::string &run_id, const Decision &decision) {
  auto s = orchestrator_.apply_decision(run_id, decision);
  if (decision.verdict != Verdict::reject)
    schedule(run_id);
  return s;
}

void RunManager::schedule(const std::string &run_id) {
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(run_id);
  }
  cv_.notify_all();
}

void RunManager::wait_idle() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return queue_.empty() && busy_ == 0; });
}

void RunManager::on_advanced(std::function<void(const RunState &)> callback) {
  std::lock_guard lock(mutex_);
  on_advanced_ = std::move(callback);
}

void RunManager::worker_loop(std::stop_token stop) {
  for (;;) {
    std::string run_id;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, stop, [&] { return !queue_.empty(); });
      if (stop.stop_requested() && queue_.empty())
        return;
      run_id = queue_.front();
      queue_.erase(queue_.begin());
      ++busy_;
    }
    std::optional<RunState> result;
    try {
      result = orchestrator_.advance(run_id, cassette_);
    } catch (const std::exception &) {
      // the failure is in the audit trail when it came from a stage
    }
    std::function<void(const RunState &)> callback;
    {
      std::lock_guard lock(mutex_);
      --busy_;
      callback = on_advanced_;
    }
    if (callback && result)
      callback(*result);
    cv_.notify_all();
  }
}

} // namespace hitl
