#include "hitl/artifact.hpp"

#include "hitl/error.hpp"

namespace hitl {

using nlohmann::json;

namespace {

AnswerRecord parse_answer_record(std::string_view raw) {
  json doc = extract_structured(raw);
  if (doc.is_object() && doc.contains("answers") && doc["answers"].is_object())
    doc = doc["answers"];
  if (!doc.is_object())
    throw Error(Errc::malformed_structure, "answer record must be an object keyed by item id");
  return AnswerRecord{std::move(doc)};
}

json report_json(const TaggedReport &r) {
  return json{{"explanation", r.explanation}, {"quotations", r.quotations}, {"score", r.score}};
}

} // namespace

std::vector<TaggedReport> Artifact::reports() const {
  if (auto *one = std::get_if<TaggedReport>(&value))
    return {*one};
  if (auto *many = std::get_if<std::vector<TaggedReport>>(&value))
    return *many;
  return {};
}

Artifact parse_artifact(std::string_view raw, const OutputContract &contract) {
  Artifact out;
  out.kind = contract.kind;
  switch (contract.kind) {
  case ContractKind::free_text:
    out.text = std::string(raw);
    out.value = FreeText{out.text};
    break;
  case ContractKind::evidence_list: {
    auto list = parse_evidence_list(raw, contract);
    out.text = format_evidence_list(list, contract);
    out.value = std::move(list);
    break;
  }
  case ContractKind::element_report:
    if (contract.enum_range) {
      auto reports = parse_element_reports(raw, contract);
      out.text = format_reports(reports);
      out.value = std::move(reports);
    } else {
      auto report = parse_element_report(raw, contract);
      out.text = format_report(report);
      out.value = std::move(report);
    }
    break;
  case ContractKind::elements_schema: {
    auto schema = contract.enum_range ? parse_elements_schema(raw, *contract.enum_range)
                                      : parse_elements_schema(raw);
    out.text = format_schema(schema);
    out.value = std::move(schema);
    break;
  }
  case ContractKind::answer_record: {
    auto record = parse_answer_record(raw);
    out.text = record.answers.dump(2);
    out.value = std::move(record);
    break;
  }
  }
  return out;
}

json artifact_to_json(const Artifact &a) {
  json j{{"kind", to_string(a.kind)}, {"text", a.text}};
  std::visit(
      [&](const auto &v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, EvidenceList>) {
          j["value"] = json{{"items", v.items}, {"abstained", v.abstained},
                            {"malformed", v.malformed}};
        } else if constexpr (std::is_same_v<T, TaggedReport>) {
          j["value"] = report_json(v);
        } else if constexpr (std::is_same_v<T, std::vector<TaggedReport>>) {
          json arr = json::array();
          for (const auto &r : v)
            arr.push_back(report_json(r));
          j["value"] = arr;
        } else if constexpr (std::is_same_v<T, ElementSchema>) {
          j["value"] = schema_to_json(v);
        } else if constexpr (std::is_same_v<T, AnswerRecord>) {
          j["value"] = v.answers;
        }
      },
      a.value);
  return j;
}

} // namespace hitl
