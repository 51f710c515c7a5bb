#include "commands.hpp"

#include <hitl/codebook.hpp>
#include <hitl/control_api.hpp>
#include <hitl/experiments.hpp>
#include <hitl/indices.hpp>
#include <hitl/pipeline_io.hpp>
#include <hitl/run_manager.hpp>
#include <hitl/text_util.hpp>

#include <csignal>
#include <iostream>
#include <pthread.h>

namespace hitl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(Errc code) noexcept {
  switch (code) {
  case Errc::provider_error:
  case Errc::timeout:
  case Errc::replay_miss:
  case Errc::stage_failed:
    return 3;
  case Errc::not_awaiting:
    return 4;
  case Errc::config_error:
  case Errc::io_error:
    return 5;
  case Errc::corrupt_audit:
  case Errc::unknown_run:
    return 1;
  default:
    return 2;
  }
}

std::string error_line(std::string_view code, std::string_view message) {
  return json{{"error", {{"code", code}, {"message", message}}}}.dump();
}

Services::Services(const CliConfig &config)
    : gateway(config.gateway, std::make_shared<HttplibTransport>()), store(config.audit_dir),
      cassette(config.cassette_path ? Cassette(config.mode, *config.cassette_path)
                                    : Cassette(config.mode)),
      orchestrator(gateway, store) {}

namespace {

const RunParams kCodingParams{"deepseek-chat", 0.0, std::nullopt, std::nullopt, std::nullopt};

void emit(const std::string &out_path, std::string_view text, std::ostream &out) {
  if (out_path.empty() || out_path == "-")
    out << text;
  else
    text::write_file(out_path, text);
}

fs::path data_path(const CliConfig &c, const std::string &given, const fs::path &fallback) {
  return given.empty() ? c.data_dir / fallback : fs::path(given);
}

// Fields set explicitly by flag, env or config file win over `base`.
RunParams overridden(RunParams base, const CliConfig &c) {
  if (c.sources.contains("params.model"))
    base.model = c.params.model;
  if (c.sources.contains("params.reasoning_effort"))
    base.reasoning_effort = c.params.reasoning_effort;
  if (c.sources.contains("params.verbosity"))
    base.verbosity = c.params.verbosity;
  if (c.sources.contains("params.temperature"))
    base.temperature = c.params.temperature;
  return base;
}

Bindings parse_inputs(const std::vector<std::string> &items) {
  Bindings out;
  for (const auto &kv : items) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(Errc::config_error, "input '" + kv + "' is not name=value or name=@file");
    auto name = kv.substr(0, eq);
    auto value = kv.substr(eq + 1);
    if (!value.empty() && value.front() == '@')
      value = text::read_file(value.substr(1));
    out[name] = std::move(value);
  }
  return out;
}

json state_summary(const RunState &s) {
  json j = run_state_json(s);
  j.erase("artifacts");
  json open = json::array();
  for (const auto &[id, st] : s.stages)
    if (st.status == StageStatus::awaiting_approval)
      open.push_back(id);
  j["open_checkpoints"] = open;
  return j;
}

int finish_run(const RunState &state, const std::string &out_path, std::ostream &out) {
  if (!out_path.empty())
    text::write_file(out_path, run_state_json(state).dump(2) + "\n");
  out << state_summary(state).dump(2) << "\n";
  if (state.status == RunStatus::failed) {
    Errc code = state.error ? state.error->code : Errc::stage_failed;
    std::cerr << error_line(to_string(code), state.error ? state.error->message : "run failed")
              << "\n";
    return exit_code_for(code);
  }
  return 0;
}

} // namespace

int cmd_validate(const CliConfig &, const std::string &spec_path, std::ostream &out) {
  auto spec = load_pipeline(spec_path);
  auto violations = validate_pipeline(spec);
  if (violations.empty()) {
    out << json{{"ok", true}, {"id", spec.id}, {"stages", spec.stages.size()},
                {"digest", spec_digest(spec)}}
               .dump()
        << "\n";
    return 0;
  }
  for (const auto &v : violations)
    out << json{{"code", to_string(v.code)}, {"stage", v.stage}, {"message", v.message}}.dump()
        << "\n";
  std::cerr << error_line("invalid-pipeline", std::to_string(violations.size()) +
                                                  " violation(s) in " + spec_path)
            << "\n";
  return 2;
}

int cmd_run(const CliConfig &config, const RunArgs &args, std::ostream &out) {
  auto spec = load_pipeline(args.spec);
  Services s(config);
  RunOptions opts;
  opts.run_id = args.run_id;
  opts.parent_run_id = args.parent_run_id;
  opts.spec_path = fs::absolute(args.spec).string();
  auto state = s.orchestrator.run(spec, parse_inputs(args.inputs), config.params, s.cassette, opts);
  return finish_run(state, args.out, out);
}

int cmd_resume(const CliConfig &config, const std::string &run_id, const std::string &spec_path,
               const std::string &out_path, std::ostream &out) {
  Services s(config);
  std::optional<PipelineSpec> expected;
  if (!spec_path.empty())
    expected = load_pipeline(spec_path);
  auto state = s.orchestrator.resume(run_id, s.cassette, expected ? &*expected : nullptr);
  return finish_run(state, out_path, out);
}

int cmd_checkpoints_list(const CliConfig &config, const std::string &run_id, std::ostream &out) {
  AuditStore store(config.audit_dir);
  std::vector<std::string> ids;
  if (run_id.empty())
    ids = store.run_ids();
  else
    ids.push_back(run_id);
  for (const auto &id : ids) {
    PipelineSpec spec;
    auto state = fold_trail(store.load(id), &spec);
    for (const auto &st : spec.stages) {
      const auto &ss = state.stages[st.id];
      if (ss.status != StageStatus::awaiting_approval)
        continue;
      out << json{{"run_id", id},
                  {"stage", st.id},
                  {"slots", ss.slots},
                  {"failed_slots", ss.failures.size()}}
                 .dump()
          << "\n";
    }
  }
  return 0;
}

int cmd_decide(const CliConfig &config, const DecisionArgs &args, std::ostream &out) {
  Services s(config);
  Decision d;
  d.checkpoint = args.stage;
  d.verdict = args.verdict;
  d.slot = args.slot;
  d.author = args.author.empty() ? "cli" : args.author;
  d.note = args.note;
  if (!args.artifact_file.empty())
    d.edited_artifact = text::read_file(args.artifact_file);
  auto state = s.orchestrator.apply_decision(args.run_id, d);
  if (args.advance && args.verdict != Verdict::reject)
    state = s.orchestrator.advance(args.run_id, s.cassette);
  return finish_run(state, {}, out);
}

int cmd_exp1(const CliConfig &config, const Exp1Args &args, std::ostream &out) {
  auto cfg = load_grid_config(data_path(config, args.config, "experiments/exp1.yaml"));
  fs::path letter_path = args.letter.empty() ? cfg.letter_path : fs::path(args.letter);
  if (letter_path.empty())
    throw Error(Errc::config_error, "no letter given (--letter or `letter` in the config)");
  auto letter = text::read_file(letter_path);
  Services s(config);
  auto cells = run_abstention_grid(s.orchestrator, cfg, letter, overridden(cfg.params, config),
                                   s.cassette);
  int rc = 0;
  for (const auto &c : cells) {
    for (const auto &[slot, f] : c.failures)
      std::cerr << json{{"condition", c.condition.label()},
                        {"run_id", c.run_id},
                        {"slot", slot},
                        {"code", to_string(f.code)},
                        {"message", f.message}}
                       .dump()
                << "\n";
    if (c.stats.counts.empty()) {
      std::cerr << error_line("stage-failed", "no usable runs for " + c.condition.label()) << "\n";
      rc = 3;
    }
  }
  emit(args.out, table2_csv(cells), out);
  return rc;
}

namespace {

struct Exp2Config {
  fs::path letter;
  fs::path seed;
  RunParams params;
  std::map<std::string, fs::path> pipelines;
};

Exp2Config load_exp2_config(const fs::path &path) {
  json j = load_structured(path);
  auto base = path.parent_path();
  Exp2Config c;
  try {
    c.letter = base / j.at("letter").get<std::string>();
    if (j.contains("seed"))
      c.seed = base / j["seed"].get<std::string>();
    if (j.contains("params"))
      c.params = parse_run_params(j["params"]);
    for (const auto &[k, v] : j.at("pipelines").items())
      c.pipelines[k] = base / v.get<std::string>();
  } catch (const json::exception &e) {
    throw Error(Errc::config_error, path.string() + ": " + e.what());
  }
  return c;
}

json regime_json(const RegimeReport &r, const std::vector<AuditEvent> &trail) {
  json elements = json::array();
  if (r.schema) {
    for (const auto &e : r.schema->elements) {
      json je{{"key", e.key}, {"label", e.label}};
      if (auto it = r.reports.find(e.key); it != r.reports.end()) {
        je["score"] = it->second.score;
        je["quotations"] = it->second.quotations.size();
      } else {
        je["score"] = nullptr;
      }
      elements.push_back(std::move(je));
    }
  }
  return json{{"regime", to_string(r.regime)},
              {"run_id", r.run_id},
              {"status", to_string(r.status)},
              {"elements", elements},
              {"synthesis", r.synthesis ? json(*r.synthesis) : json()},
              {"audit_completeness", audit_completeness(trail).ratio()}};
}

} // namespace

int cmd_exp2(const CliConfig &config, const Exp2Args &args, std::ostream &out) {
  auto cfg = load_exp2_config(data_path(config, args.config, "experiments/exp2.yaml"));
  std::vector<Regime> regimes;
  if (args.regime == "all") {
    regimes = {Regime::baseline, Regime::two_stage, Regime::multi_stage};
  } else {
    auto r = parse_regime(args.regime);
    if (!r)
      throw Error(Errc::config_error,
                  "regime '" + args.regime + "' is not baseline|two-stage|multi-stage|all");
    regimes.push_back(*r);
  }
  RegimeInputs inputs;
  inputs.letter = text::read_file(cfg.letter);
  if (!cfg.seed.empty())
    inputs.seed_corpus = text::read_file(cfg.seed);
  auto params = overridden(cfg.params, config);

  Services s(config);
  json reports = json::array();
  std::map<Regime, RegimeReport> done;
  for (auto regime : regimes) {
    auto it = cfg.pipelines.find(std::string(to_string(regime)));
    if (it == cfg.pipelines.end())
      throw Error(Errc::config_error, "no pipeline configured for " + std::string(to_string(regime)));
    auto spec = load_pipeline(it->second);
    RegimeReport report;
    // Without --auto-approve a run stops at its first open gate; decide it
    // with `hitl checkpoints` and rerun this command to continue.
    if (args.auto_approve) {
      report = run_regime(s.orchestrator, spec, regime, inputs, params, s.cassette);
    } else {
      Bindings bound{{"letter", inputs.letter}};
      if (inputs.seed_corpus)
        bound["seed"] = *inputs.seed_corpus;
      std::set<std::string> wanted;
      for (const auto &st : spec.stages)
        for (const auto &[ph, src] : st.resolved_bindings())
          if (auto b = BindingSource::parse(src); b && b->kind == BindingSource::Kind::input)
            wanted.insert(b->name);
      for (auto b = bound.begin(); b != bound.end();)
        b = wanted.contains(b->first) ? std::next(b) : bound.erase(b);
      RunOptions opts;
      opts.spec_path = fs::absolute(it->second).string();
      auto state = s.orchestrator.run(spec, bound, params, s.cassette, opts);
      report = regime_report(spec, state, regime);
    }
    reports.push_back(regime_json(report, s.orchestrator.trail(report.run_id)));
    done[regime] = std::move(report);
  }
  emit(args.out, reports.dump(2) + "\n", out);

  if (!args.table3.empty()) {
    auto a = done.find(Regime::two_stage);
    auto b = done.find(Regime::multi_stage);
    if (a == done.end() || b == done.end() || a->second.status != RunStatus::complete ||
        b->second.status != RunStatus::complete)
      throw Error(Errc::not_awaiting,
                  "--table3 needs completed two-stage and multi-stage runs");
    auto c = concordance(a->second.scores(), b->second.scores());
    std::vector<std::string> order;
    if (a->second.schema)
      for (const auto &e : a->second.schema->elements)
        order.push_back(e.key);
    text::write_file(args.table3, table3_csv(c, order));
  }
  for (const auto &[r, rep] : done)
    if (rep.status == RunStatus::failed)
      return 3;
  return 0;
}

int cmd_concordance(const std::string &csv_path, const std::string &out_path, std::ostream &out) {
  auto table = load_score_table(csv_path);
  auto c = concordance(table.a, table.b);
  emit(out_path, table3_csv(c, table.keys), out);
  std::cerr << json{{"max_delta", c.max_delta}}.dump() << "\n";
  return 0;
}

namespace {

std::vector<CodedRecord> coded_runs(const PipelineSpec &spec, const RunState &state,
                                    const std::string &paper_id) {
  std::vector<CodedRecord> out;
  const auto &st = state.stages.at(spec.report_stage);
  for (int slot = 0; slot < st.slots; ++slot) {
    const Artifact *a = state.artifact(spec.report_stage, slot);
    if (!a)
      continue;
    const auto *rec = std::get_if<AnswerRecord>(&a->value);
    if (!rec)
      continue;
    CodedRecord r;
    r.paper_id = paper_id;
    r.source = "model:" + std::to_string(slot + 1);
    r.model_meta = state.params;
    r.answers = parse_answers(rec->answers);
    out.push_back(std::move(r));
  }
  return out;
}

json dispersion_json(const Aggregate &agg) {
  json items = json::array();
  for (const auto &d : agg.dispersion) {
    json variants = json::array();
    for (const auto &[v, n] : d.variants)
      variants.push_back({{"value", v}, {"count", n}});
    items.push_back({{"item", d.item},
                     {"available", d.available},
                     {"agreement", d.agreement},
                     {"resolved", d.resolved},
                     {"variants", variants}});
  }
  return json{{"paper_id", agg.consensus.paper_id}, {"items", items}};
}

} // namespace

int cmd_code_corpus(const CliConfig &config, const CodeCorpusArgs &args, std::ostream &out) {
  auto records = load_manifest(args.manifest);
  auto instrument = load_instrument(data_path(config, args.instrument, "instrument.json"));
  auto spec = load_pipeline(data_path(config, args.pipeline, "pipelines/code-paper.yaml"));
  if (args.out_dir.empty())
    throw Error(Errc::config_error, "code-corpus needs --out <dir>");
  fs::create_directories(args.out_dir);
  auto instrument_text = format_instrument(instrument);
  auto params = overridden(kCodingParams, config);
  Services s(config);
  int rc = 0;
  for (const auto &rec : records) {
    auto paper = text::read_file(rec.text_path);
    Bindings inputs{{"instrument", instrument_text},
                    {"title", rec.title},
                    {"abstract", rec.abstract},
                    {"text", paper}};
    auto state = s.orchestrator.run(spec, inputs, params, s.cassette);
    auto runs = coded_runs(spec, state, rec.id);
    json line{{"id", rec.id}, {"run_id", state.run_id}, {"runs", runs.size()}};
    if (runs.empty()) {
      line["error"] = state.error ? std::string(to_string(state.error->code)) : "no-usable-runs";
      out << line.dump() << "\n";
      rc = 3;
      continue;
    }
    json violations = json::array();
    for (const auto &r : runs)
      for (const auto &v : validate_record(instrument, r, paper))
        violations.push_back({{"run", r.source},
                              {"item", v.item},
                              {"code", to_string(v.code)},
                              {"severity", to_string(v.severity)},
                              {"message", v.message}});
    auto agg = aggregate_runs(runs);
    json run_docs = json::array();
    for (const auto &r : runs)
      run_docs.push_back(coded_record_json(r));
    text::write_file(fs::path(args.out_dir) / (rec.id + ".json"),
                     coded_record_json(agg.consensus).dump(2) + "\n");
    text::write_file(fs::path(args.out_dir) / (rec.id + ".runs.json"), run_docs.dump(2) + "\n");
    text::write_file(fs::path(args.out_dir) / (rec.id + ".review.json"),
                     json{{"dispersion", dispersion_json(agg)}, {"violations", violations}}.dump(2) +
                         "\n");
    int unresolved = 0;
    for (const auto &d : agg.dispersion)
      unresolved += d.resolved ? 0 : 1;
    line["unresolved_items"] = unresolved;
    line["violations"] = violations.size();
    out << line.dump() << "\n";
  }
  return rc;
}

namespace {

std::vector<PlaneRow> plane_rows(const CliConfig &config, const std::string &dir,
                                 const std::string &scaling_path, ScalingSet &scaling) {
  scaling = load_scaling(data_path(config, scaling_path, "scaling.json"));
  std::vector<PlaneRow> rows;
  for (const auto &rec : load_coded_dir(dir))
    rows.push_back({rec.paper_id, compute_indices(rec, scaling)});
  return rows;
}

} // namespace

int cmd_indices(const CliConfig &config, const std::string &dir, const std::string &scaling_path,
                const std::string &out_path, std::ostream &out) {
  ScalingSet scaling;
  auto rows = plane_rows(config, dir, scaling_path, scaling);
  std::vector<std::optional<double>> depth, autonomy, repro;
  for (const auto &r : rows) {
    depth.push_back(r.indices.depth);
    autonomy.push_back(r.indices.autonomy);
    repro.push_back(r.indices.reproducibility);
  }
  auto summary = [](const std::vector<std::optional<double>> &v) {
    double sum = 0.0;
    int n = 0;
    for (const auto &x : v)
      if (x) {
        sum += *x;
        ++n;
      }
    return json{{"n", n}, {"mean", n ? json(sum / n) : json()}};
  };
  auto r = [](std::optional<double> v) { return v ? json(*v) : json(); };
  json j{{"records", rows.size()},
         {"constructs",
          {{kDepth, summary(depth)}, {kAutonomy, summary(autonomy)},
           {kReproducibility, summary(repro)}}},
         {"correlations",
          {{"depth~autonomy", r(correlate(depth, autonomy))},
           {"depth~reproducibility", r(correlate(depth, repro))},
           {"autonomy~reproducibility", r(correlate(autonomy, repro))}}},
         {"scaling_notes", scaling.notes}};
  emit(out_path, j.dump(2) + "\n", out);
  return 0;
}

int cmd_plane(const CliConfig &config, const std::string &dir, const std::string &scaling_path,
              const std::string &out_path, std::ostream &out) {
  ScalingSet scaling;
  auto rows = plane_rows(config, dir, scaling_path, scaling);
  emit(out_path, emit_plane(rows), out);
  return 0;
}

int cmd_screen(const std::string &path, const std::string &out_path, std::ostream &out) {
  auto records = parse_screening(load_structured(path));
  std::string text;
  for (const auto &id : screen(records))
    text += id + "\n";
  emit(out_path, text, out);
  return 0;
}

int cmd_serve(const CliConfig &config, const ServeArgs &args) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Services s(config);
  RunManager runs(s.orchestrator, s.cassette);
  ControlApi api(runs);
  ApiServer server(api, args.static_dir);
  int port = server.start(args.host, args.port);
  std::cerr << json{{"listening", args.host + ":" + std::to_string(port)}}.dump() << "\n";
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  runs.wait_idle();
  return 0;
}

} // namespace hitl::cli
