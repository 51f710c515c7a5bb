#include "hitl/model.hpp"

#include "hitl/digest.hpp"
#include "hitl/error.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <set>

namespace hitl {

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::pair<std::string_view, E> (&table)[N],
                        std::string_view s) {
  for (const auto &[name, value] : table)
    if (name == s)
      return value;
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::pair<std::string_view, E> (&table)[N], E v) {
  for (const auto &[name, value] : table)
    if (value == v)
      return name;
  return "unknown";
}

constexpr std::pair<std::string_view, StageKind> kStageKinds[] = {
    {"extract", StageKind::extract},       {"propose", StageKind::propose},
    {"critique", StageKind::critique},     {"adjudicate", StageKind::adjudicate},
    {"apply", StageKind::apply},           {"synthesize", StageKind::synthesize},
};
constexpr std::pair<std::string_view, ContractKind> kContractKinds[] = {
    {"evidence-list", ContractKind::evidence_list},
    {"element-report", ContractKind::element_report},
    {"elements-schema", ContractKind::elements_schema},
    {"answer-record", ContractKind::answer_record},
    {"free-text", ContractKind::free_text},
};
constexpr std::pair<std::string_view, FanoutMode> kFanoutModes[] = {
    {"none", FanoutMode::none},
    {"per-segment", FanoutMode::per_segment},
    {"per-dimension", FanoutMode::per_dimension},
};
constexpr std::pair<std::string_view, Effort> kEfforts[] = {
    {"low", Effort::low}, {"medium", Effort::medium}, {"high", Effort::high}};
constexpr std::pair<std::string_view, ApprovalTarget> kApprovalTargets[] = {
    {"parsed-output", ApprovalTarget::parsed_output}};

template <typename E>
E require_enum(std::optional<E> v, std::string_view what, std::string_view s) {
  if (!v)
    throw Error(Errc::config_error,
                "unknown " + std::string(what) + " '" + std::string(s) + "'");
  return *v;
}

} // namespace

std::string_view to_string(StageKind v) noexcept { return name_of(kStageKinds, v); }
std::string_view to_string(ContractKind v) noexcept { return name_of(kContractKinds, v); }
std::string_view to_string(FanoutMode v) noexcept { return name_of(kFanoutModes, v); }
std::string_view to_string(Effort v) noexcept { return name_of(kEfforts, v); }
std::string_view to_string(ApprovalTarget v) noexcept {
  return name_of(kApprovalTargets, v);
}

std::optional<StageKind> parse_stage_kind(std::string_view s) noexcept {
  return lookup(kStageKinds, s);
}
std::optional<ContractKind> parse_contract_kind(std::string_view s) noexcept {
  return lookup(kContractKinds, s);
}
std::optional<FanoutMode> parse_fanout_mode(std::string_view s) noexcept {
  return lookup(kFanoutModes, s);
}
std::optional<Effort> parse_effort(std::string_view s) noexcept {
  return lookup(kEfforts, s);
}
std::optional<ApprovalTarget> parse_approval_target(std::string_view s) noexcept {
  return lookup(kApprovalTargets, s);
}

std::optional<BindingSource> BindingSource::parse(std::string_view s) {
  auto dot = s.find('.');
  if (dot == std::string_view::npos || dot + 1 >= s.size())
    return std::nullopt;
  auto head = s.substr(0, dot);
  auto tail = s.substr(dot + 1);
  if (head == "input")
    return BindingSource{Kind::input, std::string(tail)};
  if (head == "stage")
    return BindingSource{Kind::stage, std::string(tail)};
  if (head == "fanout") {
    if (tail == "index")
      return BindingSource{Kind::fanout_index, {}};
    if (tail == "item")
      return BindingSource{Kind::fanout_item, {}};
    if (tail == "key")
      return BindingSource{Kind::fanout_key, {}};
  }
  return std::nullopt;
}

std::string BindingSource::str() const {
  switch (kind) {
  case Kind::input: return "input." + name;
  case Kind::stage: return "stage." + name;
  case Kind::fanout_index: return "fanout.index";
  case Kind::fanout_item: return "fanout.item";
  case Kind::fanout_key: return "fanout.key";
  }
  return {};
}

std::map<std::string, std::string> Stage::resolved_bindings() const {
  std::map<std::string, std::string> out;
  for (const auto &name : prompt.required_bindings) {
    auto it = bindings.find(name);
    out[name] = it != bindings.end() ? it->second : "input." + name;
  }
  return out;
}

const Stage *PipelineSpec::find_stage(std::string_view stage_id) const noexcept {
  for (const auto &s : stages)
    if (s.id == stage_id)
      return &s;
  return nullptr;
}

std::vector<std::string> PipelineSpec::predecessors(std::string_view stage_id) const {
  std::vector<std::string> out;
  for (const auto &e : edges)
    if (e.to == stage_id)
      out.push_back(e.from);
  return out;
}

std::vector<std::string> PipelineSpec::successors(std::string_view stage_id) const {
  std::vector<std::string> out;
  for (const auto &e : edges)
    if (e.from == stage_id)
      out.push_back(e.to);
  return out;
}

std::vector<std::string> PipelineSpec::descendants(std::string_view stage_id) const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::deque<std::string> queue{std::string(stage_id)};
  while (!queue.empty()) {
    auto cur = std::move(queue.front());
    queue.pop_front();
    for (auto &next : successors(cur)) {
      if (seen.insert(next).second) {
        out.push_back(next);
        queue.push_back(std::move(next));
      }
    }
  }
  return out;
}

bool PipelineSpec::is_ancestor(std::string_view ancestor,
                               std::string_view stage_id) const {
  auto d = descendants(ancestor);
  return std::find(d.begin(), d.end(), stage_id) != d.end();
}

std::string_view to_string(ViolationCode v) noexcept {
  switch (v) {
  case ViolationCode::cycle: return "cycle";
  case ViolationCode::dangling_edge: return "dangling-edge";
  case ViolationCode::duplicate_stage: return "duplicate-stage";
  case ViolationCode::unbound_placeholder: return "unbound-placeholder";
  case ViolationCode::unused_binding: return "unused-binding";
  case ViolationCode::bad_binding_source: return "bad-binding-source";
  case ViolationCode::non_predecessor_input: return "non-predecessor-input";
  case ViolationCode::empty_fanout_dimensions: return "empty-fanout-dimensions";
  case ViolationCode::bad_fanout: return "bad-fanout";
  case ViolationCode::invalid_runs: return "invalid-runs";
  case ViolationCode::missing_approval_target: return "missing-approval-target";
  case ViolationCode::annotation_out_of_range: return "annotation-out-of-range";
  case ViolationCode::bad_range: return "bad-range";
  case ViolationCode::empty_abstention_marker: return "empty-abstention-marker";
  case ViolationCode::bad_report_stage: return "bad-report-stage";
  case ViolationCode::invalid_params: return "invalid-params";
  }
  return "unknown";
}

namespace {

// Kahn's algorithm restricted to edges between known stages. Returns the
// order and whether every stage was placed.
std::pair<std::vector<std::string>, bool> kahn(const PipelineSpec &spec) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < spec.stages.size(); ++i)
    index.emplace(spec.stages[i].id, i);
  std::vector<std::size_t> indegree(spec.stages.size(), 0);
  std::vector<std::vector<std::size_t>> out(spec.stages.size());
  for (const auto &e : spec.edges) {
    auto f = index.find(e.from);
    auto t = index.find(e.to);
    if (f == index.end() || t == index.end())
      continue;
    out[f->second].push_back(t->second);
    ++indegree[t->second];
  }
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < indegree.size(); ++i)
    if (indegree[i] == 0)
      ready.insert(i);
  std::vector<std::string> order;
  while (!ready.empty()) {
    auto i = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(spec.stages[i].id);
    for (auto t : out[i])
      if (--indegree[t] == 0)
        ready.insert(t);
  }
  bool complete = order.size() == spec.stages.size();
  return {std::move(order), complete};
}

void validate_range(const std::optional<IntRange> &r, std::string_view what,
                    const std::string &stage, std::vector<Violation> &out) {
  if (r && (r->lo > r->hi || r->lo < 0))
    out.push_back({ViolationCode::bad_range, stage,
                   std::string(what) + " [" + std::to_string(r->lo) + "," +
                       std::to_string(r->hi) + "] is not a valid interval"});
}

} // namespace

std::vector<std::string> topological_order(const PipelineSpec &spec) {
  return kahn(spec).first;
}

std::vector<Violation> validate_pipeline(const PipelineSpec &spec) {
  std::vector<Violation> out;

  std::set<std::string> ids;
  for (const auto &s : spec.stages)
    if (!ids.insert(s.id).second)
      out.push_back({ViolationCode::duplicate_stage, s.id,
                     "stage id '" + s.id + "' is declared more than once"});

  for (const auto &e : spec.edges) {
    if (!ids.contains(e.from) || !ids.contains(e.to))
      out.push_back({ViolationCode::dangling_edge, {},
                     "edge " + e.from + " -> " + e.to +
                         " references an undeclared stage"});
  }

  auto [order, acyclic] = kahn(spec);
  if (!acyclic) {
    std::set<std::string> placed(order.begin(), order.end());
    std::string members;
    for (const auto &s : spec.stages)
      if (!placed.contains(s.id))
        members += (members.empty() ? "" : ", ") + s.id;
    out.push_back({ViolationCode::cycle, {}, "stages form a cycle: " + members});
  }

  if (spec.report_stage.empty() || !ids.contains(spec.report_stage)) {
    out.push_back({ViolationCode::bad_report_stage, {},
                   "report_stage must name a declared stage"});
  } else if (!spec.successors(spec.report_stage).empty()) {
    out.push_back({ViolationCode::bad_report_stage, spec.report_stage,
                   "report stage must be terminal (no outgoing edges)"});
  }

  for (const auto &stage : spec.stages) {
    const auto &sid = stage.id;
    if (stage.runs < 1)
      out.push_back({ViolationCode::invalid_runs, sid, "runs must be >= 1"});

    auto in_text = placeholder_names(stage.prompt.text);
    for (const auto &name : in_text)
      if (!stage.prompt.required_bindings.contains(name))
        out.push_back({ViolationCode::unbound_placeholder, sid,
                       "placeholder {" + name +
                           "} is not in required_bindings"});
    for (const auto &name : stage.prompt.required_bindings)
      if (!in_text.contains(name))
        out.push_back({ViolationCode::unused_binding, sid,
                       "required binding '" + name +
                           "' does not occur in the template text"});
    for (const auto &[name, source] : stage.bindings)
      if (!stage.prompt.required_bindings.contains(name))
        out.push_back({ViolationCode::bad_binding_source, sid,
                       "binding '" + name + "' has no matching placeholder"});

    for (const auto &[name, source_text] : stage.resolved_bindings()) {
      auto source = BindingSource::parse(source_text);
      if (!source) {
        out.push_back({ViolationCode::bad_binding_source, sid,
                       "binding '" + name + "' has malformed source '" +
                           source_text + "'"});
        continue;
      }
      using K = BindingSource::Kind;
      if (source->kind == K::stage) {
        if (!ids.contains(source->name) ||
            (acyclic && !spec.is_ancestor(source->name, sid)))
          out.push_back({ViolationCode::non_predecessor_input, sid,
                         "binding '" + name + "' reads stage '" +
                             source->name + "' which is not a predecessor"});
      } else if (source->kind != K::input &&
                 stage.fanout.mode == FanoutMode::none) {
        out.push_back({ViolationCode::bad_fanout, sid,
                       "binding '" + name + "' reads " + source_text +
                           " but the stage does not fan out"});
      }
    }

    const auto &fo = stage.fanout;
    if (fo.mode == FanoutMode::per_dimension) {
      if (fo.dimensions.empty() && fo.dimensions_from.empty()) {
        out.push_back({ViolationCode::empty_fanout_dimensions, sid,
                       "per-dimension fan-out needs a dimension list"});
      } else if (!fo.dimensions_from.empty()) {
        const Stage *from = spec.find_stage(fo.dimensions_from);
        if (!from || from->contract.kind != ContractKind::elements_schema ||
            (acyclic && !spec.is_ancestor(fo.dimensions_from, sid)))
          out.push_back({ViolationCode::bad_fanout, sid,
                         "dimensions_from must name a predecessor stage with "
                         "an elements-schema contract"});
      }
    } else if (fo.mode == FanoutMode::per_segment) {
      if (fo.segment_input.empty() || !split_segments("", fo.segmenter))
        out.push_back({ViolationCode::bad_fanout, sid,
                       "per-segment fan-out needs segment_input and a known "
                       "segmenter"});
    }

    if (stage.checkpoint && !stage.approves)
      out.push_back({ViolationCode::missing_approval_target, sid,
                     "checkpoint stage must declare the approved artifact"});

    if (stage.annotation.depth < 1 || stage.annotation.depth > 5)
      out.push_back({ViolationCode::annotation_out_of_range, sid,
                     "depth must be within 1..5"});
    if (stage.annotation.autonomy < 0 || stage.annotation.autonomy > 3)
      out.push_back({ViolationCode::annotation_out_of_range, sid,
                     "autonomy must be within 0..3"});

    validate_range(stage.contract.enum_range, "enum_range", sid, out);
    validate_range(stage.contract.score_range, "score_range", sid, out);
    if (stage.contract.abstention && stage.contract.abstention->enabled &&
        stage.contract.abstention->marker.empty())
      out.push_back({ViolationCode::empty_abstention_marker, sid,
                     "enabled abstention policy needs a marker"});
  }
  return out;
}

std::vector<Violation> validate_params(const RunParams &params) {
  std::vector<Violation> out;
  if (params.model.empty())
    out.push_back({ViolationCode::invalid_params, {}, "model is required"});
  if (params.temperature && (*params.temperature < 0.0 || *params.temperature > 2.0))
    out.push_back({ViolationCode::invalid_params, {},
                   "temperature must be within [0, 2]"});
  if (params.max_output && *params.max_output < 1)
    out.push_back({ViolationCode::invalid_params, {},
                   "max_output must be positive"});
  return out;
}

std::optional<std::vector<std::string>> split_segments(std::string_view text,
                                                       std::string_view segmenter) {
  std::vector<std::string> out;
  if (segmenter == "paragraphs") {
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] == '\n') {
        // a blank line: "\n" followed by optional spaces and another "\n"
        std::size_t j = i + 1;
        while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r'))
          ++j;
        if (j < text.size() && text[j] == '\n') {
          while (j < text.size() && (text[j] == '\n' || text[j] == ' ' ||
                                     text[j] == '\t' || text[j] == '\r'))
            ++j;
          out.emplace_back(text.substr(start, j - start));
          start = i = j;
          continue;
        }
      }
      ++i;
    }
    if (start < text.size())
      out.emplace_back(text.substr(start));
    return out;
  }
  if (segmenter.starts_with("chars:")) {
    auto digits = segmenter.substr(6);
    std::size_t n = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || n == 0)
      return std::nullopt;
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = std::min(text.size(), start + n);
      auto continuation = [&](std::size_t i) {
        return i < text.size() && (static_cast<unsigned char>(text[i]) & 0xC0) == 0x80;
      };
      // do not cut inside a UTF-8 sequence; a window smaller than the
      // sequence takes the whole sequence
      while (end > start + 1 && continuation(end))
        --end;
      while (continuation(end))
        ++end;
      out.emplace_back(text.substr(start, end - start));
      start = end;
    }
    return out;
  }
  return std::nullopt;
}

std::string spec_digest(const PipelineSpec &spec) {
  return sha256_hex(nlohmann::json(spec).dump());
}

// ---------------------------------------------------------------------------
// JSON

using nlohmann::json;

void to_json(json &j, const IntRange &v) { j = json::array({v.lo, v.hi}); }
void from_json(const json &j, IntRange &v) {
  if (!j.is_array() || j.size() != 2)
    throw Error(Errc::config_error, "range must be a two-element list [lo, hi]");
  v.lo = j.at(0).get<int>();
  v.hi = j.at(1).get<int>();
}

void to_json(json &j, const AbstentionPolicy &v) {
  j = json{{"marker", v.marker}, {"enabled", v.enabled}};
}
void from_json(const json &j, AbstentionPolicy &v) {
  v.marker = j.value("marker", std::string(kDefaultAbstentionMarker));
  v.enabled = j.value("enabled", true);
}

void to_json(json &j, const OutputContract &v) {
  j = json{{"kind", to_string(v.kind)}};
  if (v.enum_range)
    j["enum_range"] = *v.enum_range;
  if (v.abstention)
    j["abstention"] = *v.abstention;
  if (v.score_range)
    j["score_range"] = *v.score_range;
}
void from_json(const json &j, OutputContract &v) {
  auto kind = j.at("kind").get<std::string>();
  v.kind = require_enum(parse_contract_kind(kind), "contract kind", kind);
  v.enum_range.reset();
  v.abstention.reset();
  v.score_range.reset();
  if (j.contains("enum_range"))
    v.enum_range = j.at("enum_range").get<IntRange>();
  if (j.contains("abstention"))
    v.abstention = j.at("abstention").get<AbstentionPolicy>();
  if (j.contains("score_range"))
    v.score_range = j.at("score_range").get<IntRange>();
}

void to_json(json &j, const PromptTemplate &v) {
  j = json{{"text", v.text}, {"required_bindings", v.required_bindings}};
}
void from_json(const json &j, PromptTemplate &v) {
  v.text = j.at("text").get<std::string>();
  if (j.contains("required_bindings"))
    v.required_bindings = j.at("required_bindings").get<std::set<std::string>>();
  else
    v.required_bindings = placeholder_names(v.text);
}

void to_json(json &j, const FanoutPolicy &v) {
  j = json{{"mode", to_string(v.mode)}};
  if (!v.dimensions.empty())
    j["dimensions"] = v.dimensions;
  if (!v.dimensions_from.empty())
    j["dimensions_from"] = v.dimensions_from;
  if (!v.segment_input.empty())
    j["segment_input"] = v.segment_input;
  if (!v.segmenter.empty())
    j["segmenter"] = v.segmenter;
}
void from_json(const json &j, FanoutPolicy &v) {
  auto mode = j.value("mode", std::string("none"));
  v.mode = require_enum(parse_fanout_mode(mode), "fan-out mode", mode);
  v.dimensions = j.value("dimensions", std::vector<std::string>{});
  v.dimensions_from = j.value("dimensions_from", std::string{});
  v.segment_input = j.value("segment_input", std::string{});
  v.segmenter = j.value("segmenter", std::string{});
}

void to_json(json &j, const Stage &v) {
  j = json{{"id", v.id},
           {"kind", to_string(v.kind)},
           {"prompt", v.prompt},
           {"bindings", v.bindings},
           {"contract", v.contract},
           {"fanout", v.fanout},
           {"runs", v.runs},
           {"checkpoint", v.checkpoint},
           {"annotation", {{"depth", v.annotation.depth},
                           {"autonomy", v.annotation.autonomy}}}};
  if (v.approves)
    j["approves"] = to_string(*v.approves);
}
void from_json(const json &j, Stage &v) {
  v.id = j.at("id").get<std::string>();
  auto kind = j.at("kind").get<std::string>();
  v.kind = require_enum(parse_stage_kind(kind), "stage kind", kind);
  v.prompt = j.at("prompt").get<PromptTemplate>();
  v.bindings = j.value("bindings", std::map<std::string, std::string>{});
  v.contract = j.at("contract").get<OutputContract>();
  v.fanout = j.contains("fanout") ? j.at("fanout").get<FanoutPolicy>() : FanoutPolicy{};
  v.runs = j.value("runs", 1);
  v.checkpoint = j.value("checkpoint", false);
  v.approves.reset();
  if (j.contains("approves")) {
    auto a = j.at("approves").get<std::string>();
    v.approves = require_enum(parse_approval_target(a), "approval target", a);
  }
  v.annotation = {};
  if (j.contains("annotation")) {
    v.annotation.depth = j.at("annotation").value("depth", 1);
    v.annotation.autonomy = j.at("annotation").value("autonomy", 0);
  }
}

void to_json(json &j, const PipelineSpec &v) {
  json edges = json::array();
  for (const auto &e : v.edges)
    edges.push_back(json::array({e.from, e.to}));
  j = json{{"id", v.id},
           {"stages", v.stages},
           {"edges", edges},
           {"report_stage", v.report_stage},
           {"metadata", v.metadata}};
}
void from_json(const json &j, PipelineSpec &v) {
  v.id = j.at("id").get<std::string>();
  v.stages = j.at("stages").get<std::vector<Stage>>();
  v.edges.clear();
  for (const auto &e : j.value("edges", json::array())) {
    if (!e.is_array() || e.size() != 2)
      throw Error(Errc::config_error, "edge must be a [from, to] pair");
    v.edges.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
  }
  v.report_stage = j.value("report_stage", std::string{});
  v.metadata = j.value("metadata", std::map<std::string, std::string>{});
}

void to_json(json &j, const RunParams &v) {
  j = json{{"model", v.model}};
  if (v.temperature)
    j["temperature"] = *v.temperature;
  if (v.reasoning_effort)
    j["reasoning_effort"] = to_string(*v.reasoning_effort);
  if (v.verbosity)
    j["verbosity"] = to_string(*v.verbosity);
  if (v.max_output)
    j["max_output"] = *v.max_output;
}
void from_json(const json &j, RunParams &v) {
  v = RunParams{};
  v.model = j.value("model", std::string{});
  if (j.contains("temperature") && !j.at("temperature").is_null())
    v.temperature = j.at("temperature").get<double>();
  if (j.contains("reasoning_effort") && !j.at("reasoning_effort").is_null()) {
    auto s = j.at("reasoning_effort").get<std::string>();
    v.reasoning_effort = require_enum(parse_effort(s), "reasoning effort", s);
  }
  if (j.contains("verbosity") && !j.at("verbosity").is_null()) {
    auto s = j.at("verbosity").get<std::string>();
    v.verbosity = require_enum(parse_effort(s), "verbosity", s);
  }
  if (j.contains("max_output") && !j.at("max_output").is_null())
    v.max_output = j.at("max_output").get<int>();
}

} // namespace hitl
