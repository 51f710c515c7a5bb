#pragma once

#include "hitl/orchestrator.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hitl {

// ---- evidence-count grid --------------------------------------------------

struct GridCondition {
  IntRange enum_range{0, 10};
  bool abstention_enabled = false;
  int runs = 50;

  // "0-10/no", "1-10/yes"
  std::string label() const;
  friend bool operator==(const GridCondition &, const GridCondition &) = default;
};

struct CellStats {
  double mean = 0.0;
  // Sample standard deviation (n - 1); 0 for a single run.
  double sd = 0.0;
  int zero_runs = 0;
  std::vector<int> counts;
};

// Throws Error(empty_input).
CellStats summarize_counts(std::span<const int> counts);

struct GridConfig {
  // Placeholders: {range}, {abstention_clause}, {letter}.
  std::string prompt;
  // Fills {range}; "{lo}" and "{hi}" are replaced by the bounds.
  std::string range_phrase = "{lo} and {hi}";
  std::string marker{kDefaultAbstentionMarker};
  std::vector<GridCondition> conditions;
  RunParams params;
  std::filesystem::path letter_path;
};

// The four cells: {0-10, 1-10} x {no abstention, abstention}.
std::vector<GridCondition> default_grid(int runs = 50);

// YAML or JSON: prompt | prompt_file, range_phrase, marker, runs, conditions,
// params, letter. Relative paths resolve against the file's directory.
GridConfig load_grid_config(const std::filesystem::path &path);

// " Or, you can say: '<marker>'"
std::string abstention_clause(const GridConfig &config);
std::string grid_range_phrase(const GridConfig &config, IntRange range);
// Prompt for one cell with `letter` substituted.
std::string grid_prompt(const GridConfig &config, const GridCondition &condition,
                        std::string_view letter);
// Single extract stage fanned out `runs` times with an evidence-list
// contract; the only remaining input is `letter`.
PipelineSpec grid_pipeline(const GridConfig &config, const GridCondition &condition);

struct GridCell {
  GridCondition condition;
  std::string run_id;
  CellStats stats;
  // Runs whose response carried the abstention marker.
  int abstained = 0;
  // Failed slots, excluded from the statistics.
  std::map<int, SlotFailure> failures;
};

// Cells in condition order. Cells run concurrently.
std::vector<GridCell> run_abstention_grid(Orchestrator &orchestrator, const GridConfig &config,
                                          std::string_view letter, const RunParams &params,
                                          Cassette &cassette);

// Per-run evidence counts of a finished grid run, re-derived from the trail.
std::vector<int> grid_counts_from_trail(const std::vector<AuditEvent> &trail);

// condition,mean,sd,zero_runs (2 decimals)
std::string table2_csv(std::span<const GridCell> cells);

// ---- orchestration regimes ------------------------------------------------

enum class Regime { baseline, two_stage, multi_stage };
std::string_view to_string(Regime r) noexcept;
std::optional<Regime> parse_regime(std::string_view s) noexcept;

struct RegimeInputs {
  std::string letter;
  std::optional<std::string> seed_corpus;
  // Installed by an edit at the schema checkpoint, replacing the model's
  // proposal.
  std::optional<ElementSchema> approved_schema;
};

struct RegimeReport {
  Regime regime = Regime::baseline;
  std::string run_id;
  RunStatus status = RunStatus::running;
  std::optional<ElementSchema> schema;
  std::map<std::string, TaggedReport> reports;
  std::optional<std::string> synthesis;

  // Scores in schema order.
  std::vector<int> score_vector() const;
  std::map<std::string, int> scores() const;
};

// Called for every open checkpoint; returns the decision to record.
using CheckpointPolicy =
    std::function<Decision(const RunState &state, const std::string &stage_id)>;

Decision approve_all(const RunState &state, const std::string &stage_id);

// Runs `spec` to completion or to a rejected gate, resolving checkpoints
// with `policy` (approve_all by default).
RegimeReport run_regime(Orchestrator &orchestrator, const PipelineSpec &spec, Regime regime,
                        const RegimeInputs &inputs, const RunParams &params,
                        Cassette &cassette, CheckpointPolicy policy = {});

// Report view of a run state. Multi-report stages map reports to schema
// elements by position. Throws Error(contract_violation) when the report
// keys do not match the schema.
RegimeReport regime_report(const PipelineSpec &spec, const RunState &state, Regime regime);

// ---- concordance ----------------------------------------------------------

struct ElementDelta {
  int a = 0;
  int b = 0;
  int delta = 0;
};

struct Concordance {
  std::map<std::string, ElementDelta> per_element;
  int max_delta = 0;
};

// Throws Error(key_mismatch) unless both maps have the same keys.
Concordance concordance(const std::map<std::string, int> &a, const std::map<std::string, int> &b);

struct ScoreTable {
  // Row order of the source file.
  std::vector<std::string> keys;
  std::map<std::string, std::string> labels;
  std::map<std::string, int> a;
  std::map<std::string, int> b;
};

// CSV with header key,element,score_a,score_b.
ScoreTable parse_score_table(std::string_view csv);
ScoreTable load_score_table(const std::filesystem::path &path);

// element,score_a,score_b,delta in `order` (key order when empty).
std::string table3_csv(const Concordance &c, std::span<const std::string> order = {});

} // namespace hitl
