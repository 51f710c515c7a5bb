#include "hitl/experiments.hpp"

#include "hitl/error.hpp"
#include "hitl/pipeline_io.hpp"
#include "hitl/prompt_template.hpp"
#include "hitl/text_util.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <future>
#include <set>
#include <sstream>

namespace hitl {

using nlohmann::json;

std::string GridCondition::label() const {
  return std::to_string(enum_range.lo) + "-" + std::to_string(enum_range.hi) + "/" +
         (abstention_enabled ? "yes" : "no");
}

CellStats summarize_counts(std::span<const int> counts) {
  if (counts.empty())
    throw Error(Errc::empty_input, "summarize_counts needs at least one run");
  CellStats s;
  s.counts.assign(counts.begin(), counts.end());
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (int c : counts) {
    ++n;
    double d = c - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (c - mean);
    if (c == 0)
      ++s.zero_runs;
  }
  s.mean = mean;
  s.sd = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0;
  return s;
}

std::vector<GridCondition> default_grid(int runs) {
  std::vector<GridCondition> out;
  for (bool abstain : {false, true})
    for (IntRange r : {IntRange{0, 10}, IntRange{1, 10}})
      out.push_back({r, abstain, runs});
  return out;
}

namespace {

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

IntRange parse_range_value(const json &j) {
  if (j.is_string()) {
    auto s = j.get<std::string>();
    auto dash = s.find('-');
    if (dash == std::string::npos)
      throw Error(Errc::config_error, "range '" + s + "' is not lo-hi");
    return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
  }
  return j.get<IntRange>();
}

} // namespace

GridConfig load_grid_config(const std::filesystem::path &path) {
  json j = load_structured(path);
  auto base = path.parent_path();
  GridConfig c;
  try {
    if (j.contains("prompt_file"))
      c.prompt = text::read_file(base / j["prompt_file"].get<std::string>());
    else
      c.prompt = j.at("prompt").get<std::string>();
    c.range_phrase = j.value("range_phrase", c.range_phrase);
    c.marker = j.value("marker", c.marker);
    int runs = j.value("runs", 50);
    if (runs < 1)
      throw Error(Errc::config_error, "runs must be positive");
    if (j.contains("conditions")) {
      for (const auto &jc : j["conditions"]) {
        GridCondition g;
        g.enum_range = parse_range_value(jc.at("range"));
        g.abstention_enabled = jc.at("abstention").get<bool>();
        g.runs = jc.value("runs", runs);
        if (g.runs < 1)
          throw Error(Errc::config_error, "runs must be positive");
        c.conditions.push_back(g);
      }
    } else {
      c.conditions = default_grid(runs);
    }
    if (j.contains("params"))
      c.params = parse_run_params(j["params"]);
    if (j.contains("letter"))
      c.letter_path = base / j["letter"].get<std::string>();
  } catch (const json::exception &e) {
    throw Error(Errc::config_error, path.string() + ": " + e.what());
  } catch (const std::invalid_argument &) {
    throw Error(Errc::config_error, path.string() + ": bad range");
  }
  return c;
}

std::string abstention_clause(const GridConfig &config) {
  return " Or, you can say: '" + config.marker + "'";
}

std::string grid_range_phrase(const GridConfig &config, IntRange range) {
  auto s = replace_all(config.range_phrase, "{lo}", std::to_string(range.lo));
  return replace_all(std::move(s), "{hi}", std::to_string(range.hi));
}

namespace {

std::string render_cell_template(const GridConfig &config, const GridCondition &condition,
                                 std::string_view letter) {
  auto tmpl = PromptTemplate::from_text(config.prompt);
  Bindings b{{"range", grid_range_phrase(config, condition.enum_range)},
             {"abstention_clause",
              condition.abstention_enabled ? abstention_clause(config) : std::string{}},
             {"letter", std::string(letter)}};
  for (auto it = b.begin(); it != b.end();)
    it = tmpl.required_bindings.contains(it->first) ? std::next(it) : b.erase(it);
  return render_prompt(tmpl, b);
}

} // namespace

std::string grid_prompt(const GridConfig &config, const GridCondition &condition,
                        std::string_view letter) {
  return render_cell_template(config, condition, letter);
}

PipelineSpec grid_pipeline(const GridConfig &config, const GridCondition &condition) {
  // Values are never re-expanded, so binding "{letter}" keeps the placeholder.
  auto text = render_cell_template(config, condition, "{letter}");
  Stage st;
  st.id = "extract";
  st.kind = StageKind::extract;
  st.prompt = PromptTemplate::from_text(std::move(text));
  st.contract.kind = ContractKind::evidence_list;
  st.contract.enum_range = condition.enum_range;
  st.contract.abstention = AbstentionPolicy{config.marker, condition.abstention_enabled};
  st.runs = condition.runs;
  st.annotation = {1, 0};

  PipelineSpec spec;
  spec.id = "exp1-" + std::to_string(condition.enum_range.lo) + "-" +
            std::to_string(condition.enum_range.hi) + "-" +
            (condition.abstention_enabled ? "abstain" : "plain");
  spec.stages.push_back(std::move(st));
  spec.report_stage = "extract";
  spec.metadata["experiment"] = "abstention-grid";
  spec.metadata["condition"] = condition.label();
  return spec;
}

std::vector<GridCell> run_abstention_grid(Orchestrator &orchestrator, const GridConfig &config,
                                          std::string_view letter, const RunParams &params,
                                          Cassette &cassette) {
  if (text::trim(letter).empty())
    throw Error(Errc::missing_binding, "the letter text is empty");
  std::vector<std::future<RunState>> pending;
  for (const auto &cond : config.conditions) {
    auto spec = grid_pipeline(config, cond);
    pending.push_back(std::async(std::launch::async, [&orchestrator, spec, &letter, &params,
                                                      &cassette] {
      return orchestrator.run(spec, Bindings{{"letter", std::string(letter)}}, params,
                              cassette);
    }));
  }
  std::vector<GridCell> out;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    RunState state = pending[i].get();
    GridCell cell;
    cell.condition = config.conditions[i];
    cell.run_id = state.run_id;
    const auto &stage = state.stages.at("extract");
    cell.failures = stage.failures;
    std::vector<int> counts;
    for (int slot = 0; slot < stage.slots; ++slot) {
      const Artifact *a = state.artifact("extract", slot);
      if (!a || !a->evidence())
        continue;
      counts.push_back(static_cast<int>(a->evidence()->items.size()));
      if (a->evidence()->abstained)
        ++cell.abstained;
    }
    if (!counts.empty())
      cell.stats = summarize_counts(counts);
    out.push_back(std::move(cell));
  }
  return out;
}

std::vector<int> grid_counts_from_trail(const std::vector<AuditEvent> &trail) {
  std::vector<int> out;
  for (const auto &[id, artifact] : replay_run(trail))
    if (const auto *ev = artifact.evidence())
      out.push_back(static_cast<int>(ev->items.size()));
  return out;
}

std::string table2_csv(std::span<const GridCell> cells) {
  std::string out = "condition,mean,sd,zero_runs\n";
  for (const auto &c : cells) {
    out += c.condition.label() + ",";
    if (c.stats.counts.empty())
      out += ",,\n";
    else
      out += text::fixed(c.stats.mean, 2) + "," + text::fixed(c.stats.sd, 2) + "," +
             std::to_string(c.stats.zero_runs) + "\n";
  }
  return out;
}

std::string_view to_string(Regime r) noexcept {
  switch (r) {
  case Regime::baseline:
    return "baseline";
  case Regime::two_stage:
    return "two-stage";
  case Regime::multi_stage:
    return "multi-stage";
  }
  return "?";
}

std::optional<Regime> parse_regime(std::string_view s) noexcept {
  for (auto r : {Regime::baseline, Regime::two_stage, Regime::multi_stage})
    if (to_string(r) == s)
      return r;
  return std::nullopt;
}

std::vector<int> RegimeReport::score_vector() const {
  std::vector<int> out;
  if (schema) {
    for (const auto &e : schema->elements)
      if (auto it = reports.find(e.key); it != reports.end())
        out.push_back(it->second.score);
  } else {
    for (const auto &[k, r] : reports)
      out.push_back(r.score);
  }
  return out;
}

std::map<std::string, int> RegimeReport::scores() const {
  std::map<std::string, int> out;
  for (const auto &[k, r] : reports)
    out[k] = r.score;
  return out;
}

Decision approve_all(const RunState &, const std::string &stage_id) {
  Decision d;
  d.checkpoint = stage_id;
  d.verdict = Verdict::approve;
  d.author = "policy:approve-all";
  return d;
}

RegimeReport run_regime(Orchestrator &orchestrator, const PipelineSpec &spec, Regime regime,
                        const RegimeInputs &inputs, const RunParams &params,
                        Cassette &cassette, CheckpointPolicy policy) {
  if (!policy)
    policy = approve_all;
  std::set<std::string> wanted;
  for (const auto &st : spec.stages)
    for (const auto &[ph, src] : st.resolved_bindings())
      if (auto b = BindingSource::parse(src); b && b->kind == BindingSource::Kind::input)
        wanted.insert(b->name);

  Bindings bound;
  for (const auto &name : wanted) {
    if (name == "letter") {
      bound[name] = inputs.letter;
    } else if (name == "seed") {
      if (inputs.seed_corpus)
        bound[name] = *inputs.seed_corpus;
      else if (inputs.approved_schema)
        bound[name] = "";
      else
        throw Error(Errc::missing_binding,
                    std::string(to_string(regime)) + " needs a seed corpus or an approved schema");
    }
  }

  auto state = orchestrator.run(spec, bound, params, cassette);
  while (state.status == RunStatus::awaiting_approval) {
    std::string open;
    for (const auto &st : spec.stages)
      if (state.stages[st.id].status == StageStatus::awaiting_approval) {
        open = st.id;
        break;
      }
    Decision d = policy(state, open);
    const Stage *st = spec.find_stage(open);
    if (inputs.approved_schema && st->contract.kind == ContractKind::elements_schema &&
        d.verdict == Verdict::approve) {
      d.verdict = Verdict::edit;
      d.edited_artifact = format_schema(*inputs.approved_schema);
    }
    state = orchestrator.resolve_checkpoint(state.run_id, d, cassette);
  }
  return regime_report(spec, state, regime);
}

RegimeReport regime_report(const PipelineSpec &spec, const RunState &state, Regime regime) {
  RegimeReport r;
  r.regime = regime;
  r.run_id = state.run_id;
  r.status = state.status;

  const Stage *schema_stage = nullptr;
  const Stage *apply_stage = nullptr;
  for (const auto &st : spec.stages) {
    if (!schema_stage && st.contract.kind == ContractKind::elements_schema)
      schema_stage = &st;
    if (!apply_stage && st.contract.kind == ContractKind::element_report)
      apply_stage = &st;
  }
  if (schema_stage)
    if (const Artifact *a = state.artifact(schema_stage->id); a && a->schema())
      r.schema = *a->schema();

  if (apply_stage) {
    auto it = state.stages.find(apply_stage->id);
    bool ran = it != state.stages.end() && it->second.slots > 0;
    if (ran && apply_stage->fanout.mode == FanoutMode::per_dimension) {
      for (const auto &plan : plan_slots(spec, *apply_stage, state)) {
        if (plan.rep != 1)
          continue;
        if (const Artifact *a = state.artifact(apply_stage->id, plan.slot)) {
          auto reps = a->reports();
          if (!reps.empty())
            r.reports[plan.key] = reps.front();
        }
      }
    } else if (ran) {
      if (const Artifact *a = state.artifact(apply_stage->id)) {
        auto reps = a->reports();
        if (r.schema) {
          if (reps.size() != r.schema->elements.size())
            throw Error(Errc::contract_violation,
                        "stage '" + apply_stage->id + "' returned " +
                            std::to_string(reps.size()) + " reports for " +
                            std::to_string(r.schema->elements.size()) + " schema elements");
          for (std::size_t i = 0; i < reps.size(); ++i)
            r.reports[r.schema->elements[i].key] = reps[i];
        } else {
          for (std::size_t i = 0; i < reps.size(); ++i)
            r.reports[std::to_string(i + 1)] = reps[i];
        }
      }
    }
    if (state.status == RunStatus::complete && r.schema) {
      for (const auto &e : r.schema->elements)
        if (!r.reports.contains(e.key))
          throw Error(Errc::contract_violation, "no report for schema element '" + e.key + "'");
    }
  }

  if (!spec.report_stage.empty())
    if (const Stage *rs = spec.find_stage(spec.report_stage);
        rs && rs->contract.kind == ContractKind::free_text)
      if (const Artifact *a = state.artifact(rs->id))
        r.synthesis = a->text;
  return r;
}

Concordance concordance(const std::map<std::string, int> &a, const std::map<std::string, int> &b) {
  for (const auto &[k, v] : a)
    if (!b.contains(k))
      throw Error(Errc::key_mismatch, "element '" + k + "' is missing from the second set");
  for (const auto &[k, v] : b)
    if (!a.contains(k))
      throw Error(Errc::key_mismatch, "element '" + k + "' is missing from the first set");
  Concordance c;
  for (const auto &[k, va] : a) {
    int vb = b.at(k);
    int d = std::abs(va - vb);
    c.per_element[k] = {va, vb, d};
    c.max_delta = std::max(c.max_delta, d);
  }
  return c;
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

int parse_score_cell(const std::string &s, std::size_t line) {
  auto t = text::trim(s);
  int v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size())
    throw Error(Errc::config_error,
                "line " + std::to_string(line) + ": score '" + std::string(t) + "' is not an integer");
  return v;
}

} // namespace

ScoreTable parse_score_table(std::string_view csv) {
  ScoreTable t;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (n == 1 || text::trim(line).empty())
      continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 4)
      throw Error(Errc::config_error, "line " + std::to_string(n) + ": expected 4 columns");
    std::string key(text::trim(cells[0]));
    if (t.labels.contains(key))
      throw Error(Errc::duplicate_key, "line " + std::to_string(n) + ": duplicate key " + key);
    t.keys.push_back(key);
    t.labels[key] = std::string(text::trim(cells[1]));
    t.a[key] = parse_score_cell(cells[2], n);
    t.b[key] = parse_score_cell(cells[3], n);
  }
  return t;
}

ScoreTable load_score_table(const std::filesystem::path &path) {
  return parse_score_table(text::read_file(path));
}

std::string table3_csv(const Concordance &c, std::span<const std::string> order) {
  std::vector<std::string> keys(order.begin(), order.end());
  if (keys.empty())
    for (const auto &[k, v] : c.per_element)
      keys.push_back(k);
  std::string out = "element,score_a,score_b,delta\n";
  for (const auto &k : keys) {
    const auto &d = c.per_element.at(k);
    out += k + "," + std::to_string(d.a) + "," + std::to_string(d.b) + "," +
           std::to_string(d.delta) + "\n";
  }
  return out;
}

} // namespace hitl
