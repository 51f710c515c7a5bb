#pragma once

#include "hitl/model.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace hitl {

struct Span {
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const Span &, const Span &) = default;
};

struct BlockScan {
  std::vector<std::string> blocks;
  // Content spans in the input, parallel to `blocks`.
  std::vector<Span> spans;
  // Openings with no closing tag after them.
  std::size_t malformed = 0;
  // Openings swallowed inside another block (first close wins).
  std::size_t nested = 0;
};

// Contents of well-formed `<tag>...</tag>` pairs in document order. The first
// closing tag after an opening ends the block; same-tag nesting is not
// recognized. Unclosed openings are counted, not returned.
BlockScan extract_blocks(std::string_view text, std::string_view tag);

struct EvidenceCount {
  std::size_t count = 0;
  bool abstained = false;
  std::size_t malformed = 0;

  friend bool operator==(const EvidenceCount &, const EvidenceCount &) = default;
};

// Case-insensitive substring test after whitespace normalization.
bool contains_marker(std::string_view text, std::string_view marker);

EvidenceCount count_evidence(std::string_view text, const AbstentionPolicy &policy);

struct EvidenceList {
  std::vector<std::string> items;
  bool abstained = false;
  std::size_t malformed = 0;

  friend bool operator==(const EvidenceList &, const EvidenceList &) = default;
};

EvidenceList parse_evidence_list(std::string_view text, const OutputContract &contract);
std::string format_evidence_list(const EvidenceList &list, const OutputContract &contract);

struct TaggedReport {
  std::string explanation;
  std::vector<std::string> quotations;
  int score = 0;

  friend bool operator==(const TaggedReport &, const TaggedReport &) = default;
};

// <explanation>, <quotations> holding <quote1>..<quoteN> (ordered by index,
// gaps tolerated) and an integer <score> inside the contract's score range.
// Throws Error with missing_explanation, missing_score, non_integer_score,
// score_out_of_range or missing_quotations (a positive score needs at least
// one quotation).
TaggedReport parse_element_report(std::string_view text, const OutputContract &contract);

// Several reports in one response, split after each </score>. The count must
// fall inside contract.enum_range (cardinality_violation otherwise).
std::vector<TaggedReport> parse_element_reports(std::string_view text,
                                                const OutputContract &contract);

// Canonical serialization; parse_element_report inverts it for trimmed
// fields that contain no tag markup.
std::string format_report(const TaggedReport &report);
std::string format_reports(const std::vector<TaggedReport> &reports);

struct SchemaElement {
  std::string key;
  std::string label;
  std::string definition;
  std::vector<std::string> rubric;
  std::vector<std::string> evidence;

  friend bool operator==(const SchemaElement &, const SchemaElement &) = default;
};

struct ElementSchema {
  std::vector<SchemaElement> elements;

  friend bool operator==(const ElementSchema &, const ElementSchema &) = default;
};

inline constexpr IntRange kSchemaCardinality{10, 20};

// First JSON object (or list of objects) in free-form model output,
// preferring a fenced block. Throws Error with no_structured_region or
// malformed_structure (message carries the byte position).
nlohmann::json extract_structured(std::string_view text);

// extract_structured plus validation. Accepts {"dimensions": [...]},
// {"elements": [...]} or a bare list. Throws Error with no_structured_region,
// malformed_structure, cardinality_violation or duplicate_key.
ElementSchema parse_elements_schema(std::string_view text,
                                    IntRange cardinality = kSchemaCardinality);

nlohmann::json schema_to_json(const ElementSchema &schema);
// Pretty-printed canonical JSON.
std::string format_schema(const ElementSchema &schema);

struct QuoteCheck {
  std::string quote;
  bool verified = false;
  // Matched spans in the original (unnormalized) source, one per segment.
  std::vector<Span> segments;
};

// Splits on "..." / U+2026 and looks for every whitespace-normalized segment
// in the normalized source at strictly increasing positions. A quote wrapped
// in double quotation marks is also tried without them.
QuoteCheck verify_quote(std::string_view quote, std::string_view source);

} // namespace hitl
