#pragma once

#include "hitl/prompt_template.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hitl {

enum class StageKind { extract, propose, critique, adjudicate, apply, synthesize };
enum class ContractKind {
  evidence_list,
  element_report,
  elements_schema,
  answer_record,
  free_text
};
enum class FanoutMode { none, per_segment, per_dimension };
enum class Effort { low, medium, high };
// What a reviewer approves at a checkpoint. Only the parsed stage output is
// supported.
enum class ApprovalTarget { parsed_output };

std::string_view to_string(StageKind v) noexcept;
std::string_view to_string(ContractKind v) noexcept;
std::string_view to_string(FanoutMode v) noexcept;
std::string_view to_string(Effort v) noexcept;
std::string_view to_string(ApprovalTarget v) noexcept;

std::optional<StageKind> parse_stage_kind(std::string_view s) noexcept;
std::optional<ContractKind> parse_contract_kind(std::string_view s) noexcept;
std::optional<FanoutMode> parse_fanout_mode(std::string_view s) noexcept;
std::optional<Effort> parse_effort(std::string_view s) noexcept;
std::optional<ApprovalTarget> parse_approval_target(std::string_view s) noexcept;

struct IntRange {
  int lo = 0;
  int hi = 0;

  bool contains(int v) const noexcept { return v >= lo && v <= hi; }
  friend bool operator==(const IntRange &, const IntRange &) = default;
};

struct AbstentionPolicy {
  std::string marker;
  bool enabled = false;

  friend bool operator==(const AbstentionPolicy &, const AbstentionPolicy &) = default;
};

inline constexpr std::string_view kDefaultAbstentionMarker =
    "There is no evidence for that!";

struct OutputContract {
  ContractKind kind = ContractKind::free_text;
  // List cardinality. For element-report contracts a range turns the contract
  // into a sequence of reports (one call answering several elements).
  std::optional<IntRange> enum_range;
  std::optional<AbstentionPolicy> abstention;
  std::optional<IntRange> score_range;

  IntRange effective_score_range() const noexcept {
    return score_range.value_or(IntRange{0, 10});
  }
  friend bool operator==(const OutputContract &, const OutputContract &) = default;
};

struct FanoutPolicy {
  FanoutMode mode = FanoutMode::none;
  // per-dimension: a static list, or the id of a predecessor stage whose
  // elements-schema artifact supplies the dimensions.
  std::vector<std::string> dimensions;
  std::string dimensions_from;
  // per-segment: the run input to split and the segmenter
  // ("paragraphs" or "chars:<n>").
  std::string segment_input;
  std::string segmenter;

  friend bool operator==(const FanoutPolicy &, const FanoutPolicy &) = default;
};

// Descriptive only; never consulted by the executor.
struct StageAnnotation {
  int depth = 1;    // 1..5
  int autonomy = 0; // 0..3

  friend bool operator==(const StageAnnotation &, const StageAnnotation &) = default;
};

// Where a placeholder's value comes from when a stage is rendered.
struct BindingSource {
  enum class Kind { input, stage, fanout_index, fanout_item, fanout_key };
  Kind kind = Kind::input;
  std::string name; // input name or stage id

  // "input.<name>", "stage.<id>", "fanout.index", "fanout.item", "fanout.key"
  static std::optional<BindingSource> parse(std::string_view s);
  std::string str() const;
};

struct Stage {
  std::string id;
  StageKind kind = StageKind::extract;
  PromptTemplate prompt;
  // placeholder -> binding source; a placeholder without an entry reads the
  // run input of the same name.
  std::map<std::string, std::string> bindings;
  OutputContract contract;
  FanoutPolicy fanout;
  int runs = 1;
  bool checkpoint = false;
  std::optional<ApprovalTarget> approves;
  StageAnnotation annotation;

  // Effective source for every required placeholder.
  std::map<std::string, std::string> resolved_bindings() const;

  friend bool operator==(const Stage &, const Stage &) = default;
};

struct Edge {
  std::string from;
  std::string to;

  friend bool operator==(const Edge &, const Edge &) = default;
};

struct PipelineSpec {
  std::string id;
  std::vector<Stage> stages;
  std::vector<Edge> edges;
  std::string report_stage;
  std::map<std::string, std::string> metadata;

  const Stage *find_stage(std::string_view stage_id) const noexcept;
  std::vector<std::string> predecessors(std::string_view stage_id) const;
  std::vector<std::string> successors(std::string_view stage_id) const;
  // Transitive successors.
  std::vector<std::string> descendants(std::string_view stage_id) const;
  bool is_ancestor(std::string_view ancestor, std::string_view stage_id) const;

  friend bool operator==(const PipelineSpec &, const PipelineSpec &) = default;
};

struct RunParams {
  std::string model;
  std::optional<double> temperature;
  std::optional<Effort> reasoning_effort;
  std::optional<Effort> verbosity;
  std::optional<int> max_output;

  friend bool operator==(const RunParams &, const RunParams &) = default;
};

enum class ViolationCode {
  cycle,
  dangling_edge,
  duplicate_stage,
  unbound_placeholder,
  unused_binding,
  bad_binding_source,
  non_predecessor_input,
  empty_fanout_dimensions,
  bad_fanout,
  invalid_runs,
  missing_approval_target,
  annotation_out_of_range,
  bad_range,
  empty_abstention_marker,
  bad_report_stage,
  invalid_params,
};

std::string_view to_string(ViolationCode v) noexcept;

struct Violation {
  ViolationCode code;
  std::string stage; // empty for pipeline-level violations
  std::string message;

  friend bool operator==(const Violation &, const Violation &) = default;
};

// Every invariant violation, in a deterministic order. Empty means the
// orchestrator will accept the spec.
std::vector<Violation> validate_pipeline(const PipelineSpec &spec);
std::vector<Violation> validate_params(const RunParams &params);

// Stage ids in dependency order, ties broken by declaration order.
// Precondition: the edge set is acyclic.
std::vector<std::string> topological_order(const PipelineSpec &spec);

// Splits `text` for per-segment fan-out. The segments concatenate back to
// `text` exactly. "paragraphs" cuts after each blank-line run; "chars:<n>"
// cuts every n bytes without splitting a UTF-8 sequence. nullopt when the
// segmenter name is not recognized.
std::optional<std::vector<std::string>> split_segments(std::string_view text,
                                                       std::string_view segmenter);

// Hex SHA-256 of the canonical JSON form.
std::string spec_digest(const PipelineSpec &spec);

void to_json(nlohmann::json &j, const IntRange &v);
void from_json(const nlohmann::json &j, IntRange &v);
void to_json(nlohmann::json &j, const AbstentionPolicy &v);
void from_json(const nlohmann::json &j, AbstentionPolicy &v);
void to_json(nlohmann::json &j, const OutputContract &v);
void from_json(const nlohmann::json &j, OutputContract &v);
void to_json(nlohmann::json &j, const PromptTemplate &v);
void from_json(const nlohmann::json &j, PromptTemplate &v);
void to_json(nlohmann::json &j, const FanoutPolicy &v);
void from_json(const nlohmann::json &j, FanoutPolicy &v);
void to_json(nlohmann::json &j, const Stage &v);
void from_json(const nlohmann::json &j, Stage &v);
void to_json(nlohmann::json &j, const PipelineSpec &v);
void from_json(const nlohmann::json &j, PipelineSpec &v);
void to_json(nlohmann::json &j, const RunParams &v);
void from_json(const nlohmann::json &j, RunParams &v);

} // namespace hitl
