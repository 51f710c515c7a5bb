#include "hitl/orchestrator.hpp"

#include "hitl/digest.hpp"
#include "hitl/pipeline_io.hpp"
#include "hitl/text_util.hpp"

#include <algorithm>

namespace hitl {

using nlohmann::json;

std::string_view to_string(StageStatus s) noexcept {
  switch (s) {
  case StageStatus::pending: return "pending";
  case StageStatus::running: return "running";
  case StageStatus::awaiting_approval: return "awaiting-approval";
  case StageStatus::approved: return "approved";
  case StageStatus::rejected: return "rejected";
  case StageStatus::complete: return "complete";
  case StageStatus::failed: return "failed";
  }
  return "pending";
}

std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
  case RunStatus::running: return "running";
  case RunStatus::awaiting_approval: return "awaiting-approval";
  case RunStatus::rejected: return "rejected";
  case RunStatus::complete: return "complete";
  case RunStatus::failed: return "failed";
  }
  return "running";
}

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
  case Verdict::approve: return "approve";
  case Verdict::reject: return "reject";
  case Verdict::edit: return "edit";
  }
  return "approve";
}

std::optional<Verdict> parse_verdict(std::string_view s) noexcept {
  if (s == "approve")
    return Verdict::approve;
  if (s == "reject")
    return Verdict::reject;
  if (s == "edit")
    return Verdict::edit;
  return std::nullopt;
}

const Artifact *RunState::artifact(const std::string &stage, int slot) const {
  auto it = artifacts.find({stage, slot});
  return it == artifacts.end() ? nullptr : &it->second;
}

namespace {

Errc errc_from_name(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Errc::io_error); ++i)
    if (to_string(static_cast<Errc>(i)) == name)
      return static_cast<Errc>(i);
  return Errc::stage_failed;
}

json failure_json(const SlotFailure &f) {
  return json{{"code", to_string(f.code)}, {"message", f.message}};
}

SlotFailure failure_from(const json &j) {
  return SlotFailure{errc_from_name(j.value("code", std::string{})),
                     j.value("message", std::string{})};
}

json messages_json(const std::vector<Message> &messages) {
  json arr = json::array();
  for (const auto &m : messages)
    arr.push_back(json{{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

RunStatus derive_status(const PipelineSpec &spec, const RunState &state) {
  bool awaiting = false;
  bool rejected = false;
  bool all_done = true;
  for (const auto &stage : spec.stages) {
    auto it = state.stages.find(stage.id);
    auto status = it == state.stages.end() ? StageStatus::pending : it->second.status;
    if (status == StageStatus::failed)
      return RunStatus::failed;
    awaiting |= status == StageStatus::awaiting_approval;
    rejected |= status == StageStatus::rejected;
    all_done &= status == StageStatus::complete || status == StageStatus::approved;
  }
  if (state.error)
    return RunStatus::failed;
  if (awaiting)
    return RunStatus::awaiting_approval;
  if (rejected)
    return RunStatus::rejected;
  return all_done ? RunStatus::complete : RunStatus::running;
}

bool preds_done(const PipelineSpec &spec, const RunState &state, const std::string &id) {
  for (const auto &p : spec.predecessors(id))
    if (!state.stages.at(p).done())
      return false;
  return true;
}

} // namespace

json run_state_json(const RunState &s) {
  json stages = json::object();
  for (const auto &[id, st] : s.stages) {
    json failures = json::object();
    for (const auto &[slot, f] : st.failures)
      failures[std::to_string(slot)] = failure_json(f);
    stages[id] = json{{"status", to_string(st.status)},
                      {"slots", st.slots},
                      {"called", st.called.size()},
                      {"failures", failures}};
  }
  json artifacts = json::array();
  for (const auto &[id, a] : s.artifacts) {
    auto j = artifact_to_json(a);
    j["stage"] = id.first;
    j["slot"] = id.second;
    artifacts.push_back(std::move(j));
  }
  json out{{"run_id", s.run_id},
           {"spec_id", s.spec_id},
           {"spec_digest", s.spec_digest},
           {"parent_run_id", s.parent_run_id},
           {"status", to_string(s.status)},
           {"clock", s.clock},
           {"stages", stages},
           {"artifacts", artifacts}};
  out["error"] = s.error ? failure_json(*s.error) : json();
  return out;
}

void from_json(const json &j, Decision &d) {
  d.checkpoint = j.at("checkpoint").get<std::string>();
  auto verdict = parse_verdict(j.at("verdict").get<std::string>());
  if (!verdict)
    throw Error(Errc::invalid_decision,
                "verdict must be approve, reject or edit, got " + j.at("verdict").dump());
  d.verdict = *verdict;
  d.edited_artifact.reset();
  if (j.contains("edited_artifact") && !j["edited_artifact"].is_null())
    d.edited_artifact = j["edited_artifact"].get<std::string>();
  d.slot.reset();
  if (j.contains("slot") && !j["slot"].is_null())
    d.slot = j["slot"].get<int>();
  d.author = j.value("author", std::string{});
  d.note = j.value("note", std::string{});
}

void to_json(json &j, const Decision &d) {
  j = json{{"checkpoint", d.checkpoint},
           {"verdict", to_string(d.verdict)},
           {"author", d.author},
           {"note", d.note}};
  if (d.edited_artifact)
    j["edited_artifact"] = *d.edited_artifact;
  if (d.slot)
    j["slot"] = *d.slot;
}

std::vector<SlotPlan> plan_slots(const PipelineSpec &spec, const Stage &stage,
                                 const RunState &state) {
  struct Item {
    std::string item;
    std::string key;
  };
  std::vector<Item> items;
  const auto &fo = stage.fanout;
  switch (fo.mode) {
  case FanoutMode::none:
    items.push_back({});
    break;
  case FanoutMode::per_dimension:
    if (!fo.dimensions_from.empty()) {
      const Artifact *a = state.artifact(fo.dimensions_from, 0);
      const ElementSchema *schema = a ? a->schema() : nullptr;
      if (!schema)
        throw Error(Errc::stage_failed, "stage '" + stage.id + "' takes its dimensions from '" +
                                            fo.dimensions_from +
                                            "', which has no element schema");
      for (const auto &e : schema->elements)
        items.push_back({e.label.empty() ? e.key : e.label, e.key});
    } else {
      for (const auto &d : fo.dimensions)
        items.push_back({d, d});
    }
    break;
  case FanoutMode::per_segment: {
    auto it = state.inputs.find(fo.segment_input);
    if (it == state.inputs.end())
      throw Error(Errc::missing_binding, "segment input '" + fo.segment_input + "' not bound");
    auto segments = split_segments(it->second, fo.segmenter);
    if (!segments)
      throw Error(Errc::config_error, "unknown segmenter '" + fo.segmenter + "'");
    if (segments->empty())
      segments->push_back({});
    for (std::size_t i = 0; i < segments->size(); ++i)
      items.push_back({(*segments)[i], std::to_string(i + 1)});
    break;
  }
  }
  (void)spec;
  std::vector<SlotPlan> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    for (int rep = 1; rep <= stage.runs; ++rep)
      out.push_back(SlotPlan{static_cast<int>(out.size()), static_cast<int>(i + 1), rep,
                             items[i].item, items[i].key});
  return out;
}

std::string stage_output_text(const PipelineSpec &spec, const RunState &state,
                              const std::string &stage_id) {
  const Stage *stage = spec.find_stage(stage_id);
  if (!stage)
    throw Error(Errc::missing_binding, "unknown stage '" + stage_id + "'");
  auto plan = plan_slots(spec, *stage, state);
  if (plan.size() == 1) {
    const Artifact *a = state.artifact(stage_id, 0);
    return a ? a->text : std::string{};
  }
  std::string out;
  for (const auto &p : plan) {
    const Artifact *a = state.artifact(stage_id, p.slot);
    if (!a)
      continue;
    out += "<analysis element=\"" + (p.key.empty() ? std::to_string(p.item_index) : p.key) + "\"";
    if (stage->runs > 1)
      out += " run=\"" + std::to_string(p.rep) + "\"";
    out += ">\n" + a->text;
    if (!a->text.empty() && a->text.back() != '\n')
      out += '\n';
    out += "</analysis>\n";
  }
  return out;
}

namespace {

Bindings render_bindings(const PipelineSpec &spec, const Stage &stage, const RunState &state,
                         const SlotPlan &slot) {
  Bindings out;
  for (const auto &[name, source_text] : stage.resolved_bindings()) {
    auto source = BindingSource::parse(source_text);
    if (!source)
      throw Error(Errc::invalid_pipeline, "bad binding source '" + source_text + "'");
    using K = BindingSource::Kind;
    switch (source->kind) {
    case K::input: {
      auto it = state.inputs.find(source->name);
      if (it == state.inputs.end())
        throw Error(Errc::missing_binding, "input '" + source->name + "' not bound");
      out[name] = it->second;
      break;
    }
    case K::stage: out[name] = stage_output_text(spec, state, source->name); break;
    case K::fanout_index: out[name] = std::to_string(slot.item_index); break;
    case K::fanout_item: out[name] = slot.item; break;
    case K::fanout_key: out[name] = slot.key; break;
    }
  }
  return out;
}

void set_artifact(RunState &state, const Stage &stage, int slot, std::string_view raw) {
  auto a = parse_artifact(raw, stage.contract);
  state.artifacts.insert_or_assign(SlotId{stage.id, slot}, std::move(a));
  state.stages[stage.id].failures.erase(slot);
}

} // namespace

RunState fold_trail(const std::vector<AuditEvent> &trail, PipelineSpec *spec_out) {
  verify_trail(trail);
  RunState state;
  PipelineSpec spec;
  if (trail.empty())
    throw Error(Errc::corrupt_audit, "empty audit trail");
  if (trail.front().kind != EventKind::run_started)
    throw Error(Errc::corrupt_audit, "trail does not begin with run-started");

  for (const auto &ev : trail) {
    const auto &p = ev.payload;
    state.clock = ev.seq;
    try {
      switch (ev.kind) {
      case EventKind::run_started:
        spec = p.at("spec").get<PipelineSpec>();
        state.run_id = ev.run_id;
        state.spec_id = spec.id;
        state.spec_digest = p.at("spec_digest").get<std::string>();
        state.parent_run_id = p.value("parent_run_id", std::string{});
        for (const auto &[k, v] : p.at("inputs").items())
          state.inputs[k] = v.get<std::string>();
        state.params = p.at("params").get<RunParams>();
        for (const auto &s : spec.stages)
          state.stages[s.id] = StageState{};
        break;
      case EventKind::call: {
        auto stage_id = p.at("stage").get<std::string>();
        int slot = p.at("slot").get<int>();
        auto &st = state.stages.at(stage_id);
        st.called.insert(slot);
        if (st.status == StageStatus::pending)
          st.status = StageStatus::running;
        if (p.contains("response"))
          state.responses[{stage_id, slot}] = p["response"].at("text").get<std::string>();
        else
          st.failures[slot] = failure_from(p.at("error"));
        break;
      }
      case EventKind::parse: {
        auto stage_id = p.at("stage").get<std::string>();
        int slot = p.at("slot").get<int>();
        const Stage *stage = spec.find_stage(stage_id);
        if (!stage)
          throw Error(Errc::corrupt_audit, "parse event for unknown stage " + stage_id);
        if (p.value("ok", false)) {
          auto raw = state.responses.find({stage_id, slot});
          if (raw == state.responses.end())
            throw Error(Errc::corrupt_audit, "parse event without a recorded response");
          set_artifact(state, *stage, slot, raw->second);
        } else {
          state.stages[stage_id].failures[slot] = failure_from(p.at("error"));
        }
        break;
      }
      case EventKind::stage_complete: {
        auto &st = state.stages.at(p.at("stage").get<std::string>());
        st.slots = p.at("slots").get<int>();
        st.status = StageStatus::complete;
        break;
      }
      case EventKind::checkpoint_opened:
        state.stages.at(p.at("stage").get<std::string>()).status = StageStatus::awaiting_approval;
        break;
      case EventKind::decision: {
        auto d = p.get<Decision>();
        const Stage *stage = spec.find_stage(d.checkpoint);
        if (!stage)
          throw Error(Errc::corrupt_audit, "decision for unknown stage " + d.checkpoint);
        auto &st = state.stages.at(d.checkpoint);
        if (d.verdict == Verdict::reject) {
          st.status = StageStatus::rejected;
        } else {
          if (d.verdict == Verdict::edit)
            state.artifacts.insert_or_assign(
                SlotId{d.checkpoint, d.slot.value_or(0)},
                parse_artifact(d.edited_artifact.value_or(std::string{}), stage->contract));
          st.status = StageStatus::approved;
        }
        break;
      }
      case EventKind::error: {
        auto failure = failure_from(p);
        if (p.contains("stage") && p["stage"].is_string())
          state.stages.at(p["stage"].get<std::string>()).status = StageStatus::failed;
        state.error = failure;
        break;
      }
      }
    } catch (const json::exception &e) {
      throw Error(Errc::corrupt_audit,
                  "event " + std::to_string(ev.seq) + " (" + std::string(to_string(ev.kind)) +
                      "): " + e.what());
    } catch (const std::out_of_range &) {
      throw Error(Errc::corrupt_audit,
                  "event " + std::to_string(ev.seq) + " names an unknown stage");
    }
  }
  state.status = derive_status(spec, state);
  if (spec_out)
    *spec_out = std::move(spec);
  return state;
}

std::map<SlotId, Artifact> replay_run(const std::vector<AuditEvent> &trail) {
  verify_trail(trail);
  std::map<SlotId, Artifact> out;
  for (const auto &ev : trail) {
    if (ev.kind != EventKind::call || !ev.payload.contains("response"))
      continue;
    try {
      auto contract = ev.payload.at("contract").get<OutputContract>();
      auto text = ev.payload["response"].at("text").get<std::string>();
      SlotId id{ev.payload.at("stage").get<std::string>(), ev.payload.at("slot").get<int>()};
      out.insert_or_assign(std::move(id), parse_artifact(text, contract));
    } catch (const json::exception &e) {
      throw Error(Errc::corrupt_audit, "call event " + std::to_string(ev.seq) + ": " + e.what());
    } catch (const Error &e) {
      if (e.code() == Errc::corrupt_audit || e.code() == Errc::config_error)
        throw;
    }
  }
  return out;
}

std::map<SlotId, std::string> recorded_artifacts(const std::vector<AuditEvent> &trail) {
  std::map<SlotId, std::string> out;
  for (const auto &ev : trail)
    if (ev.kind == EventKind::parse && ev.payload.value("ok", false))
      out[{ev.payload.at("stage").get<std::string>(), ev.payload.at("slot").get<int>()}] =
          ev.payload.at("artifact").at("text").get<std::string>();
  return out;
}

AuditCompleteness audit_completeness(const std::vector<AuditEvent> &trail) {
  AuditCompleteness out;
  std::map<SlotId, std::vector<const json *>> parses;
  std::vector<const AuditEvent *> calls;
  for (const auto &ev : trail) {
    if (ev.kind == EventKind::call) {
      calls.push_back(&ev);
    } else if (ev.kind == EventKind::parse) {
      ++out.parses;
      parses[{ev.payload.at("stage").get<std::string>(), ev.payload.at("slot").get<int>()}]
          .push_back(&ev.payload);
    }
  }
  out.calls = calls.size();
  for (const auto *call : calls) {
    const auto &p = call->payload;
    SlotId id{p.at("stage").get<std::string>(), p.at("slot").get<int>()};
    auto it = parses.find(id);
    if (!p.contains("response")) {
      // a failed call has nothing to parse
      if (it == parses.end())
        ++out.reproduced;
      continue;
    }
    if (it == parses.end() || it->second.size() != 1)
      continue;
    const json &recorded = *it->second.front();
    auto contract = p.at("contract").get<OutputContract>();
    try {
      auto a = parse_artifact(p["response"].at("text").get<std::string>(), contract);
      if (recorded.value("ok", false) && recorded.at("artifact").at("text") == a.text)
        ++out.reproduced;
    } catch (const Error &e) {
      if (!recorded.value("ok", true) &&
          recorded.at("error").value("code", std::string{}) == to_string(e.code()))
        ++out.reproduced;
    }
  }
  return out;
}

std::string derive_run_id(const PipelineSpec &spec, const Bindings &inputs,
                          const RunParams &params, const std::string &parent_run_id) {
  json in = json::object();
  for (const auto &[k, v] : inputs)
    in[k] = v;
  json seed{{"spec", spec_digest(spec)}, {"inputs", in}, {"params", params},
            {"parent", parent_run_id}};
  std::string id = spec.id.empty() ? "run" : spec.id;
  return id + "-" + sha256_hex(seed.dump()).substr(0, 12);
}

struct Orchestrator::Context {
  std::mutex exec_mutex;
  std::mutex state_mutex;
  PipelineSpec spec;
  RunState state;
  std::unique_ptr<AuditWriter> writer;
  std::string spec_path;

  AuditEvent append(EventKind kind, json payload) {
    auto ev = writer->append(kind, std::move(payload));
    state.clock = ev.seq;
    return ev;
  }
};

Orchestrator::Orchestrator(Gateway &gateway, AuditStore &store)
    : gateway_(gateway), store_(store) {}

Orchestrator::~Orchestrator() = default;

std::shared_ptr<Orchestrator::Context> Orchestrator::context(const std::string &run_id) {
  std::lock_guard lock(contexts_mutex_);
  if (auto it = contexts_.find(run_id); it != contexts_.end())
    return it->second;
  auto trail = store_.load(run_id);
  auto ctx = std::make_shared<Context>();
  ctx->state = fold_trail(trail, &ctx->spec);
  ctx->spec_path = trail.front().payload.value("spec_path", std::string{});
  ctx->writer = store_.writer(run_id);
  contexts_[run_id] = ctx;
  return ctx;
}

RunState Orchestrator::run(const PipelineSpec &spec, const Bindings &inputs,
                           const RunParams &params, Cassette &cassette,
                           const RunOptions &options) {
  auto violations = validate_pipeline(spec);
  if (!violations.empty()) {
    std::string msg = "pipeline '" + spec.id + "' is invalid:";
    for (const auto &v : violations)
      msg += " [" + std::string(to_string(v.code)) + (v.stage.empty() ? "" : " " + v.stage) +
             "] " + v.message + ";";
    throw Error(Errc::invalid_pipeline, msg);
  }
  auto param_violations = validate_params(params);
  if (!param_violations.empty())
    throw Error(Errc::config_error, param_violations.front().message);
  for (const auto &stage : spec.stages)
    for (const auto &[name, source_text] : stage.resolved_bindings()) {
      auto source = BindingSource::parse(source_text);
      if (source && source->kind == BindingSource::Kind::input && !inputs.contains(source->name))
        throw Error(Errc::missing_binding,
                    "stage '" + stage.id + "' needs input '" + source->name + "'");
    }

  auto run_id = options.run_id.empty()
                    ? derive_run_id(spec, inputs, params, options.parent_run_id)
                    : options.run_id;
  if (store_.exists(run_id))
    return resume(run_id, cassette, &spec);

  auto ctx = std::make_shared<Context>();
  ctx->spec = spec;
  ctx->spec_path = options.spec_path;
  ctx->writer = store_.writer(run_id);
  json in = json::object();
  for (const auto &[k, v] : inputs)
    in[k] = v;
  auto digest = spec_digest(spec);
  {
    std::lock_guard lock(ctx->state_mutex);
    ctx->append(EventKind::run_started, json{{"spec", spec},
                                             {"spec_digest", digest},
                                             {"spec_path", options.spec_path},
                                             {"inputs", in},
                                             {"params", params},
                                             {"parent_run_id", options.parent_run_id}});
    ctx->state.run_id = run_id;
    ctx->state.spec_id = spec.id;
    ctx->state.spec_digest = digest;
    ctx->state.parent_run_id = options.parent_run_id;
    ctx->state.inputs = inputs;
    ctx->state.params = params;
    for (const auto &s : spec.stages)
      ctx->state.stages[s.id] = StageState{};
  }
  {
    std::lock_guard lock(contexts_mutex_);
    contexts_[run_id] = ctx;
  }
  std::lock_guard exec(ctx->exec_mutex);
  execute(*ctx, cassette);
  std::lock_guard lock(ctx->state_mutex);
  return ctx->state;
}

RunState Orchestrator::resume(const std::string &run_id, Cassette &cassette,
                              const PipelineSpec *expected) {
  auto ctx = context(run_id);
  std::lock_guard exec(ctx->exec_mutex);
  {
    std::lock_guard lock(ctx->state_mutex);
    std::optional<PipelineSpec> current;
    if (expected)
      current = *expected;
    else if (!ctx->spec_path.empty() && std::filesystem::exists(ctx->spec_path))
      current = load_pipeline(ctx->spec_path);
    if (current && spec_digest(*current) != ctx->state.spec_digest)
      throw Error(Errc::digest_mismatch,
                  "spec for run " + run_id + " changed since the run started");
    // failed stages get another chance; recorded calls are still reused
    for (auto &[id, st] : ctx->state.stages)
      if (st.status == StageStatus::failed)
        st.status = st.called.empty() ? StageStatus::pending : StageStatus::running;
    ctx->state.error.reset();
  }
  execute(*ctx, cassette);
  std::lock_guard lock(ctx->state_mutex);
  return ctx->state;
}

RunState Orchestrator::apply_decision(const std::string &run_id, const Decision &d) {
  auto ctx = context(run_id);
  std::lock_guard lock(ctx->state_mutex);
  const Stage *stage = ctx->spec.find_stage(d.checkpoint);
  if (!stage)
    throw Error(Errc::not_awaiting, "run " + run_id + " has no stage '" + d.checkpoint + "'");
  auto &st = ctx->state.stages.at(stage->id);
  if (!stage->checkpoint || (st.status != StageStatus::awaiting_approval &&
                             st.status != StageStatus::rejected))
    throw Error(Errc::not_awaiting, "stage '" + stage->id + "' is " +
                                        std::string(to_string(st.status)) +
                                        ", not awaiting a decision");

  std::optional<Artifact> edited;
  if (d.verdict == Verdict::edit) {
    if (!d.edited_artifact)
      throw Error(Errc::invalid_decision, "an edit must carry the edited artifact");
    int slots = std::max(st.slots, 1);
    if (slots > 1 && !d.slot)
      throw Error(Errc::invalid_decision, "stage '" + stage->id + "' has " +
                                              std::to_string(slots) +
                                              " slots; the edit must name one");
    if (d.slot && (*d.slot < 0 || *d.slot >= slots))
      throw Error(Errc::invalid_decision, "slot " + std::to_string(*d.slot) + " out of range");
    try {
      edited = parse_artifact(*d.edited_artifact, stage->contract);
    } catch (const Error &e) {
      throw Error(Errc::contract_violation,
                  "edited artifact violates the " + std::string(to_string(stage->contract.kind)) +
                      " contract: [" + std::string(e.code_name()) + "] " + e.what());
    }
  } else if (d.edited_artifact) {
    throw Error(Errc::invalid_decision, "only an edit may carry an artifact");
  }

  json payload = d;
  if (edited) {
    // store the canonical form so the trail shows exactly what successors see
    payload["edited_artifact"] = edited->text;
    payload["slot"] = d.slot.value_or(0);
  }
  ctx->append(EventKind::decision, std::move(payload));
  if (d.verdict == Verdict::reject) {
    st.status = StageStatus::rejected;
  } else {
    if (edited)
      ctx->state.artifacts.insert_or_assign(SlotId{stage->id, d.slot.value_or(0)},
                                            std::move(*edited));
    st.status = StageStatus::approved;
  }
  ctx->state.status = derive_status(ctx->spec, ctx->state);
  return ctx->state;
}

RunState Orchestrator::advance(const std::string &run_id, Cassette &cassette) {
  auto ctx = context(run_id);
  std::lock_guard exec(ctx->exec_mutex);
  execute(*ctx, cassette);
  std::lock_guard lock(ctx->state_mutex);
  return ctx->state;
}

RunState Orchestrator::resolve_checkpoint(const std::string &run_id, const Decision &decision,
                                          Cassette &cassette) {
  apply_decision(run_id, decision);
  return advance(run_id, cassette);
}

RunState Orchestrator::state(const std::string &run_id) {
  auto ctx = context(run_id);
  std::lock_guard lock(ctx->state_mutex);
  return ctx->state;
}

PipelineSpec Orchestrator::spec(const std::string &run_id) {
  return context(run_id)->spec;
}

std::vector<AuditEvent> Orchestrator::trail(const std::string &run_id) const {
  return store_.load(run_id);
}

void Orchestrator::execute(Context &ctx, Cassette &cassette) {
  auto order = topological_order(ctx.spec);
  for (;;) {
    const Stage *next = nullptr;
    {
      std::lock_guard lock(ctx.state_mutex);
      if (ctx.state.error)
        break;
      for (const auto &id : order) {
        const auto &st = ctx.state.stages.at(id);
        if ((st.status == StageStatus::pending || st.status == StageStatus::running) &&
            preds_done(ctx.spec, ctx.state, id)) {
          next = ctx.spec.find_stage(id);
          break;
        }
      }
    }
    if (!next)
      break;
    execute_stage(ctx, *next, cassette);
  }
  std::lock_guard lock(ctx.state_mutex);
  ctx.state.status = derive_status(ctx.spec, ctx.state);
}

void Orchestrator::execute_stage(Context &ctx, const Stage &stage, Cassette &cassette) {
  std::vector<SlotPlan> plan;
  std::vector<CompletionRequest> requests;
  std::vector<int> request_slots;
  auto fail = [&](Errc code, const std::string &message, json extra = json::object()) {
    json payload{{"stage", stage.id}, {"code", to_string(code)}, {"message", message}};
    payload.update(extra);
    ctx.append(EventKind::error, std::move(payload));
    ctx.state.stages[stage.id].status = StageStatus::failed;
    ctx.state.error = SlotFailure{code, message};
  };

  {
    std::lock_guard lock(ctx.state_mutex);
    auto &st = ctx.state.stages[stage.id];
    st.status = StageStatus::running;
    try {
      plan = plan_slots(ctx.spec, stage, ctx.state);
      for (const auto &slot : plan) {
        SlotId id{stage.id, slot.slot};
        if (st.called.contains(slot.slot)) {
          // recorded call whose parse event was lost
          if (!ctx.state.artifacts.contains(id) && !st.failures.contains(slot.slot)) {
            auto raw = ctx.state.responses.find(id);
            if (raw != ctx.state.responses.end()) {
              try {
                set_artifact(ctx.state, stage, slot.slot, raw->second);
                ctx.append(EventKind::parse,
                           json{{"stage", stage.id}, {"slot", slot.slot}, {"ok", true},
                                {"artifact", json{{"kind", to_string(stage.contract.kind)},
                                                  {"text", ctx.state.artifacts.at(id).text}}}});
              } catch (const Error &e) {
                SlotFailure f{e.code(), e.what()};
                st.failures[slot.slot] = f;
                ctx.append(EventKind::parse, json{{"stage", stage.id}, {"slot", slot.slot},
                                                  {"ok", false}, {"error", failure_json(f)}});
              }
            }
          }
          continue;
        }
        CompletionRequest req;
        req.params = ctx.state.params;
        req.messages.push_back(
            Message{Role::user,
                    render_prompt(stage.prompt, render_bindings(ctx.spec, stage, ctx.state, slot))});
        req.attempt = slot.rep;
        requests.push_back(std::move(req));
        request_slots.push_back(slot.slot);
      }
    } catch (const Error &e) {
      fail(e.code(), e.what());
      return;
    }
  }

  std::vector<int> misses;
  std::string miss_message;
  gateway_.complete_all(requests, cassette, [&](std::size_t i, const SlotResult &result) {
    int slot = request_slots[i];
    const auto &req = requests[i];
    std::lock_guard lock(ctx.state_mutex);
    auto &st = ctx.state.stages[stage.id];
    if (result.error && result.error->code == Errc::replay_miss) {
      // nothing was called, so there is no call event to record
      misses.push_back(slot);
      miss_message = result.error->message;
      return;
    }
    json call{{"stage", stage.id},
              {"slot", slot},
              {"attempt", req.attempt},
              {"key", req.idempotency_key()},
              {"params", req.params},
              {"messages", messages_json(req.messages)},
              {"contract", stage.contract}};
    if (result.response)
      call["response"] = *result.response;
    else
      call["error"] = *result.error;
    ctx.append(EventKind::call, std::move(call));
    st.called.insert(slot);
    if (!result.response) {
      st.failures[slot] = SlotFailure{result.error->code, result.error->message};
      return;
    }
    SlotId id{stage.id, slot};
    ctx.state.responses[id] = result.response->text;
    try {
      set_artifact(ctx.state, stage, slot, result.response->text);
      ctx.append(EventKind::parse,
                 json{{"stage", stage.id}, {"slot", slot}, {"ok", true},
                      {"artifact", json{{"kind", to_string(stage.contract.kind)},
                                        {"text", ctx.state.artifacts.at(id).text}}}});
    } catch (const Error &e) {
      SlotFailure f{e.code(), e.what()};
      st.failures[slot] = f;
      ctx.append(EventKind::parse, json{{"stage", stage.id}, {"slot", slot}, {"ok", false},
                                        {"error", failure_json(f)}});
    }
  });

  std::lock_guard lock(ctx.state_mutex);
  auto &st = ctx.state.stages[stage.id];
  if (!misses.empty()) {
    std::sort(misses.begin(), misses.end());
    fail(Errc::replay_miss,
         std::to_string(misses.size()) + " slot(s) missing from the cassette: " + miss_message,
         json{{"slots", misses}});
    return;
  }
  st.slots = static_cast<int>(plan.size());
  if (!plan.empty() && st.failures.size() == plan.size()) {
    bool all_parse = std::all_of(st.failures.begin(), st.failures.end(), [](const auto &kv) {
      auto c = kv.second.code;
      return c != Errc::provider_error && c != Errc::timeout && c != Errc::config_error;
    });
    const auto &first = st.failures.begin()->second;
    fail(all_parse ? Errc::contract_violation : Errc::stage_failed,
         "every slot of stage '" + stage.id + "' failed; first: [" +
             std::string(to_string(first.code)) + "] " + first.message);
    return;
  }
  json failed = json::array();
  for (const auto &[slot, f] : st.failures)
    failed.push_back(slot);
  ctx.append(EventKind::stage_complete,
             json{{"stage", stage.id}, {"slots", st.slots}, {"failed", failed}});
  st.status = StageStatus::complete;
  if (stage.checkpoint) {
    ctx.append(EventKind::checkpoint_opened,
               json{{"stage", stage.id},
                    {"approves", stage.approves ? to_string(*stage.approves) : "parsed-output"},
                    {"failed", failed}});
    st.status = StageStatus::awaiting_approval;
  }
}

} // namespace hitl
