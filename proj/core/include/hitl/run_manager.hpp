#pragma once

#include "hitl/orchestrator.hpp"

#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace hitl {

struct PendingCheckpoint {
  std::string run_id;
  std::string stage;
};

// Hosts runs for the control API. Decisions are validated and recorded on the
// caller's thread; the continuation they unblock runs on a background worker
// so HTTP handlers never wait on model calls.
class RunManager {
 public:
  RunManager(Orchestrator &orchestrator, Cassette &cassette);
  ~RunManager();

  RunManager(const RunManager &) = delete;
  RunManager &operator=(const RunManager &) = delete;

  std::vector<std::string> run_ids() const;
  RunState state(const std::string &run_id);
  PipelineSpec spec(const std::string &run_id);
  std::vector<AuditEvent> trail(const std::string &run_id) const;
  std::vector<PendingCheckpoint> pending(const std::string &run_id);
  std::vector<PendingCheckpoint> pending_all();

  // Records the decision and queues the continuation. Throws what
  // Orchestrator::apply_decision throws.
  RunState decide(const std::string &run_id, const Decision &decision);

  // Queues Orchestrator::advance for a run.
  void schedule(const std::string &run_id);
  // Blocks until every queued continuation has finished.
  void wait_idle();

  // Invoked after each continuation with the run's new state.
  void on_advanced(std::function<void(const RunState &)> callback);

 private:
  void worker_loop(std::stop_token stop);

  Orchestrator &orchestrator_;
  Cassette &cassette_;
  mutable std::mutex mutex_;
  std::condition_variable_any cv_;
  std::vector<std::string> queue_;
  std::size_t busy_ = 0;
  std::function<void(const RunState &)> on_advanced_;
  std::jthread worker_;
};

} // namespace hitl
