#pragma once

#include "hitl/artifact.hpp"
#include "hitl/audit.hpp"
#include "hitl/gateway.hpp"
#include "hitl/model.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace hitl {

enum class StageStatus {
  pending,
  running,
  awaiting_approval,
  approved,
  rejected,
  complete,
  failed,
};
enum class RunStatus { running, awaiting_approval, rejected, complete, failed };
enum class Verdict { approve, reject, edit };

std::string_view to_string(StageStatus s) noexcept;
std::string_view to_string(RunStatus s) noexcept;
std::string_view to_string(Verdict v) noexcept;
std::optional<Verdict> parse_verdict(std::string_view s) noexcept;

struct SlotFailure {
  Errc code = Errc::stage_failed;
  std::string message;
};

struct StageState {
  StageStatus status = StageStatus::pending;
  // Slot count once the stage has run; 0 before.
  int slots = 0;
  // Slots that have a recorded call event. These are never called again.
  std::set<int> called;
  std::map<int, SlotFailure> failures;

  bool done() const noexcept {
    return status == StageStatus::complete || status == StageStatus::approved;
  }
};

using SlotId = std::pair<std::string, int>;

struct RunState {
  std::string run_id;
  std::string spec_id;
  std::string spec_digest;
  std::string parent_run_id;
  RunStatus status = RunStatus::running;
  std::map<std::string, StageState> stages;
  std::map<SlotId, Artifact> artifacts;
  // Raw model output per slot, as recorded in the call events.
  std::map<SlotId, std::string> responses;
  Bindings inputs;
  RunParams params;
  // Sequence number of the last audit event folded in.
  std::uint64_t clock = 0;
  std::optional<SlotFailure> error;

  const Artifact *artifact(const std::string &stage, int slot = 0) const;
};

nlohmann::json run_state_json(const RunState &state);

struct Decision {
  std::string checkpoint;
  Verdict verdict = Verdict::approve;
  std::optional<std::string> edited_artifact;
  // Required for edits on multi-slot stages.
  std::optional<int> slot;
  std::string author;
  std::string note;
};

void from_json(const nlohmann::json &j, Decision &d);
void to_json(nlohmann::json &j, const Decision &d);

// One fan-out slot: item `item_index` (1-based) repeated `rep` (1-based) times.
struct SlotPlan {
  int slot = 0;
  int item_index = 1;
  int rep = 1;
  std::string item;
  std::string key;
};

// Slots of `stage` given the artifacts produced so far.
std::vector<SlotPlan> plan_slots(const PipelineSpec &spec, const Stage &stage,
                                 const RunState &state);

// Text a successor sees when it binds `stage.<id>`: the canonical artifact for
// a single-slot stage, otherwise one <analysis> block per successful slot.
std::string stage_output_text(const PipelineSpec &spec, const RunState &state,
                              const std::string &stage_id);

// Rebuilds run state from a verified trail. The trail must start with a
// run-started event.
RunState fold_trail(const std::vector<AuditEvent> &trail, PipelineSpec *spec_out = nullptr);

// Re-parses every recorded response with the current codec, using the
// contract stored in each call event. Slots whose response no longer parses
// are left out.
std::map<SlotId, Artifact> replay_run(const std::vector<AuditEvent> &trail);
// Canonical artifact text per slot as recorded by parse events at run time.
std::map<SlotId, std::string> recorded_artifacts(const std::vector<AuditEvent> &trail);

struct AuditCompleteness {
  std::size_t calls = 0;
  std::size_t parses = 0;
  // Calls with exactly one parse event whose outcome replay reproduces.
  std::size_t reproduced = 0;

  double ratio() const noexcept {
    return calls == 0 ? 1.0 : static_cast<double>(reproduced) / static_cast<double>(calls);
  }
};

AuditCompleteness audit_completeness(const std::vector<AuditEvent> &trail);

struct RunOptions {
  // Derived from spec digest, inputs, params and parent when empty.
  std::string run_id;
  std::string parent_run_id;
  // Recorded so resume can detect edits to the spec file.
  std::string spec_path;
};

std::string derive_run_id(const PipelineSpec &spec, const Bindings &inputs,
                          const RunParams &params, const std::string &parent_run_id);

class Orchestrator {
 public:
  Orchestrator(Gateway &gateway, AuditStore &store);
  ~Orchestrator();

  // Starts a run, or resumes it when a trail for the run id already exists.
  // Returns when the run completes, fails or reaches an open checkpoint.
  // Throws Error(invalid_pipeline), Error(missing_binding) or
  // Error(digest_mismatch) before any event is written.
  RunState run(const PipelineSpec &spec, const Bindings &inputs, const RunParams &params,
               Cassette &cassette, const RunOptions &options = {});

  // Continues from the audit trail alone. `expected`, when given, must have
  // the recorded digest; otherwise the recorded spec path (if it still
  // exists) is reloaded and compared.
  RunState resume(const std::string &run_id, Cassette &cassette,
                  const PipelineSpec *expected = nullptr);

  // Validates and records a decision without executing successors. Throws
  // Error(not_awaiting), Error(invalid_decision) or Error(contract_violation).
  RunState apply_decision(const std::string &run_id, const Decision &decision);
  // Runs every stage whose gates are open.
  RunState advance(const std::string &run_id, Cassette &cassette);
  RunState resolve_checkpoint(const std::string &run_id, const Decision &decision,
                              Cassette &cassette);

  RunState state(const std::string &run_id);
  PipelineSpec spec(const std::string &run_id);
  std::vector<AuditEvent> trail(const std::string &run_id) const;
  AuditStore &store() noexcept { return store_; }

 private:
  struct Context;

  std::shared_ptr<Context> context(const std::string &run_id);
  void execute(Context &ctx, Cassette &cassette);
  void execute_stage(Context &ctx, const Stage &stage, Cassette &cassette);

  Gateway &gateway_;
  AuditStore &store_;
  std::mutex contexts_mutex_;
  std::map<std::string, std::shared_ptr<Context>> contexts_;
};

} // namespace hitl
