#pragma once

#include "hitl/model.hpp"
#include "hitl/tag_codec.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace hitl {

// Structured answers emitted by a coding stage: an object keyed by item id.
struct AnswerRecord {
  nlohmann::json answers = nlohmann::json::object();

  friend bool operator==(const AnswerRecord &, const AnswerRecord &) = default;
};

struct FreeText {
  std::string text;

  friend bool operator==(const FreeText &, const FreeText &) = default;
};

using ArtifactValue = std::variant<FreeText, EvidenceList, TaggedReport,
                                   std::vector<TaggedReport>, ElementSchema, AnswerRecord>;

// Parsed stage output. `text` is the canonical serialization, which is what
// downstream prompts see and what reviewers approve or edit.
struct Artifact {
  ContractKind kind = ContractKind::free_text;
  std::string text;
  ArtifactValue value;

  const ElementSchema *schema() const noexcept { return std::get_if<ElementSchema>(&value); }
  const EvidenceList *evidence() const noexcept { return std::get_if<EvidenceList>(&value); }
  // Every report held, whether the contract is single or multi report.
  std::vector<TaggedReport> reports() const;
};

// Dispatches on contract.kind. Throws the codec's Error on violations.
Artifact parse_artifact(std::string_view raw, const OutputContract &contract);

// {"kind": ..., "text": ...} plus a kind-specific "value".
nlohmann::json artifact_to_json(const Artifact &artifact);

} // namespace hitl
