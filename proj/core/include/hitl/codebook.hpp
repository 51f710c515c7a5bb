#pragma once

#include "hitl/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hitl {

enum class ItemKind { select_one, multiselect, open_text };
std::string_view to_string(ItemKind k) noexcept;

inline constexpr std::string_view kNoneCode = "NONE";

struct ItemOption {
  std::string code;
  std::string label;
  // Numeric anchor for scored items.
  std::optional<int> anchor;
};

struct Item {
  std::string id;
  int part = 0;
  ItemKind kind = ItemKind::select_one;
  std::string text;
  std::vector<ItemOption> options;
  bool requires_reason = false;
  std::optional<IntRange> scale;
  // Multiselect items whose NONE option excludes every other code.
  bool none_exclusive = false;

  const ItemOption *option(std::string_view code) const noexcept;
};

struct Instrument {
  std::string version;
  std::vector<Item> items;

  const Item *find(std::string_view id) const noexcept;
};

Instrument parse_instrument(const nlohmann::json &j);
Instrument load_instrument(const std::filesystem::path &path);
// Structural problems in the instrument itself (duplicate ids, select items
// with fewer than two options, anchors outside the scale).
std::vector<std::string> check_instrument(const Instrument &instrument);
// Plain-text rendering for coding prompts, one item per paragraph.
std::string format_instrument(const Instrument &instrument);

struct Rationale {
  std::string text;
  std::vector<std::string> quotes;
};

struct Answer {
  std::string item;
  // Selected codes; for open-text items the single response text.
  std::vector<std::string> values;
  std::optional<Rationale> rationale;

  std::string text() const { return values.empty() ? std::string{} : values.front(); }
};

enum class AnswerViolationCode {
  option_membership,
  none_combined,
  rationale_presence,
  rationale_length,
  quote_count,
  quote_not_verbatim,
  // record level
  unknown_item,
  out_of_scope_item,
};
enum class Severity { error, warning };

std::string_view to_string(AnswerViolationCode c) noexcept;
std::string_view to_string(Severity s) noexcept;

struct AnswerViolation {
  AnswerViolationCode code;
  Severity severity = Severity::error;
  std::string item;
  std::string message;
};

inline constexpr IntRange kQuoteCount{1, 10};
inline constexpr std::size_t kMaxRationaleSentences = 5;

// Every violation the answer exhibits. Quotes are checked against
// `source_text` only when it is given.
std::vector<AnswerViolation> validate_answer(const Item &item, const Answer &answer,
                                             std::optional<std::string_view> source_text = {});

struct CodedRecord {
  std::string paper_id;
  std::map<std::string, Answer> answers;
  // "human" or "model:<k>"
  std::string source = "human";
  std::optional<RunParams> model_meta;
};

// Answers from an object keyed by item id:
//   {"Q10": {"value": "3", "rationale": {"text": ..., "quotes": [...]}}, ...}
// `value` may be a string, a number or a list of codes.
std::map<std::string, Answer> parse_answers(const nlohmann::json &j);
CodedRecord parse_coded_record(const nlohmann::json &j);
nlohmann::json coded_record_json(const CodedRecord &record);
CodedRecord load_coded_record(const std::filesystem::path &path);
// Every *.json file in `dir`, sorted by file name.
std::vector<CodedRecord> load_coded_dir(const std::filesystem::path &dir);

// Answer-level violations plus unknown items and, when Q00 = NO, any answer
// beyond Part 1.
std::vector<AnswerViolation> validate_record(const Instrument &instrument,
                                             const CodedRecord &record,
                                             std::optional<std::string_view> source_text = {});

enum class ScreenVerdict { relevant, not_relevant };

struct ScreeningPass {
  std::string model;
  ScreenVerdict verdict = ScreenVerdict::not_relevant;
};

struct ScreeningRecord {
  std::string id;
  std::string abstract;
  std::vector<ScreeningPass> passes;
};

inline constexpr std::size_t kScreeningPasses = 3;

std::vector<ScreeningRecord> parse_screening(const nlohmann::json &j);
// Ids judged relevant by all three passes. Throws Error(pass_count_mismatch)
// naming the first record without exactly three passes.
std::set<std::string> screen(std::span<const ScreeningRecord> records);

struct UseCandidate {
  std::string id;
  bool generative = true;
  int autonomy = 0;
  int depth = 1;
  int volume = 0;
  int methods_position = 0;
};

// Generative candidates only; maximum (autonomy, depth, volume), then the
// earliest methods position, then the smallest id. Throws
// Error(no_generative_candidate).
UseCandidate select_primary_use(std::span<const UseCandidate> candidates);

struct ItemDispersion {
  std::string item;
  // Runs that answered the item.
  int available = 0;
  // Share of available runs giving the modal answer.
  double agreement = 0.0;
  bool resolved = false;
  // Distinct answers in first-seen order with their counts.
  std::vector<std::pair<std::string, int>> variants;
};

struct Aggregate {
  CodedRecord consensus;
  std::vector<ItemDispersion> dispersion;
};

// Strict majority per item over the runs that answered it; multiselect
// answers compare as sets and open text compares verbatim (never merged).
// Items without a strict majority are left out of the consensus and flagged
// unresolved; every variant is kept in the dispersion report. Throws Error(empty_input) or
// Error(mixed_paper_ids).
Aggregate aggregate_runs(std::span<const CodedRecord> records);

struct ManifestRecord {
  std::string id;
  std::string title;
  std::string abstract;
  std::filesystem::path text_path;
};

// {"records": [{"id", "title", "abstract", "text_path"}]}; text paths are
// resolved against the manifest's directory.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path &path);

} // namespace hitl
