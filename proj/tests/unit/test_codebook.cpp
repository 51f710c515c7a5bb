#include <doctest.h>

#include "support.hpp"

#include <hitl/codebook.hpp>
#include <hitl/pipeline_io.hpp>

#include <algorithm>
#include <random>

using namespace hitl;
using hitl::test::data_dir;
using hitl::test::errc_of;
using nlohmann::json;

namespace {

const Instrument &instrument() {
  static const Instrument inst = load_instrument(data_dir() / "instrument.json");
  return inst;
}

std::set<AnswerViolationCode> error_codes(const std::vector<AnswerViolation> &vs) {
  std::set<AnswerViolationCode> out;
  for (const auto &v : vs)
    if (v.severity == Severity::error)
      out.insert(v.code);
  return out;
}

Answer answer(std::string item, std::vector<std::string> values, int quotes = 1) {
  Answer a;
  a.item = std::move(item);
  a.values = std::move(values);
  if (quotes >= 0) {
    Rationale r{"Because.", {}};
    for (int i = 0; i < quotes; ++i)
      r.quotes.push_back("q" + std::to_string(i));
    a.rationale = r;
  }
  return a;
}

} // namespace

TEST_CASE("shipped instrument is well formed") {
  const auto &inst = instrument();
  CHECK(inst.items.size() == 34);
  CHECK(check_instrument(inst).empty());
  const Item *q30 = inst.find("Q30");
  REQUIRE(q30);
  CHECK(q30->kind == ItemKind::multiselect);
  CHECK(q30->none_exclusive);
  CHECK(inst.find("Q10")->scale == IntRange{1, 5});
  auto text = format_instrument(inst);
  CHECK(text.find("Q30 (multiselect, NONE is exclusive") != std::string::npos);
}

TEST_CASE("instrument checks catch structural problems") {
  auto j = json::parse(R"({"version": "t", "items": [
    {"id": "A", "part": 0, "kind": "select-one", "text": "t", "options": [{"code": "X", "label": "x"}]},
    {"id": "A", "part": 0, "kind": "open-text", "text": "t"}]})");
  auto problems = check_instrument(parse_instrument(j));
  CHECK(problems.size() >= 2);
}

TEST_CASE("answer rules") {
  const auto &inst = instrument();
  const Item &q30 = *inst.find("Q30");
  const Item &q10 = *inst.find("Q10");
  const Item &q02 = *inst.find("Q02");

  CHECK(error_codes(validate_answer(q30, answer("Q30", {"NONE"}))).empty());
  CHECK(error_codes(validate_answer(q30, answer("Q30", {"1", "2"}))).empty());
  CHECK(error_codes(validate_answer(q30, answer("Q30", {"1", "NONE"}))) ==
        std::set{AnswerViolationCode::none_combined});
  CHECK(error_codes(validate_answer(q30, answer("Q30", {}))) ==
        std::set{AnswerViolationCode::option_membership});

  CHECK(error_codes(validate_answer(q10, answer("Q10", {"3"}, 10))).empty());
  CHECK(error_codes(validate_answer(q10, answer("Q10", {"3"}, 0))) ==
        std::set{AnswerViolationCode::quote_count});
  CHECK(error_codes(validate_answer(q10, answer("Q10", {"3"}, 11))) ==
        std::set{AnswerViolationCode::quote_count});
  CHECK(error_codes(validate_answer(q10, answer("Q10", {"3"}, -1))) ==
        std::set{AnswerViolationCode::rationale_presence});
  CHECK(error_codes(validate_answer(q10, answer("Q10", {"9"}))) ==
        std::set{AnswerViolationCode::option_membership});
  CHECK(error_codes(validate_answer(q10, answer("Q10", {"1", "2"}))) ==
        std::set{AnswerViolationCode::option_membership});

  // a rationale where none is asked for is only a warning
  auto extra = validate_answer(q02, answer("Q02", {"LAW"}));
  REQUIRE(extra.size() == 1);
  CHECK(extra[0].severity == Severity::warning);

  auto wordy = answer("Q10", {"3"});
  wordy.rationale->text = "One. Two. Three. Four. Five. Six.";
  auto w = validate_answer(q10, wordy);
  REQUIRE(w.size() == 1);
  CHECK(w[0].code == AnswerViolationCode::rationale_length);
  CHECK(w[0].severity == Severity::warning);
}

TEST_CASE("quotes are checked against the source when given") {
  const Item &q10 = *instrument().find("Q10");
  auto a = answer("Q10", {"3"});
  a.rationale->quotes = {"assign one of six frames", "a sentence that is not there"};
  auto paper = std::string("The model was asked to assign one of six frames to each segment.");
  CHECK(error_codes(validate_answer(q10, a, paper)) ==
        std::set{AnswerViolationCode::quote_not_verbatim});
  CHECK(error_codes(validate_answer(q10, a)).empty());
}

TEST_CASE("record rules: unknown items and scope") {
  CodedRecord r;
  r.paper_id = "X";
  r.answers["Q00"] = answer("Q00", {"NO"});
  r.answers["Q01"] = Answer{"Q01", {"t"}, {}};
  r.answers["Q10"] = answer("Q10", {"2"});
  r.answers["Q99"] = Answer{"Q99", {"t"}, {}};
  auto codes = error_codes(validate_record(instrument(), r));
  CHECK(codes.contains(AnswerViolationCode::out_of_scope_item));
  CHECK(codes.contains(AnswerViolationCode::unknown_item));
}

TEST_CASE("codebook fixtures: each invalid one trips exactly its rule") {
  auto dir = data_dir() / "fixtures/codebook";
  for (const auto &rec : load_coded_dir(dir / "valid"))
    CHECK_MESSAGE(error_codes(validate_record(instrument(), rec)).empty(), rec.paper_id);
  std::map<std::string, AnswerViolationCode> expected{
      {"P101", AnswerViolationCode::none_combined},
      {"P102", AnswerViolationCode::quote_count},
      {"P103", AnswerViolationCode::quote_count},
      {"P104", AnswerViolationCode::rationale_presence}};
  auto invalid = load_coded_dir(dir / "invalid");
  CHECK(invalid.size() == expected.size());
  for (const auto &rec : invalid)
    CHECK(error_codes(validate_record(instrument(), rec)) == std::set{expected.at(rec.paper_id)});
}

TEST_CASE("coded records round-trip through json") {
  auto rec = load_coded_record(data_dir() / "fixtures/codebook/valid/full-record.json");
  auto again = parse_coded_record(coded_record_json(rec));
  CHECK(again.paper_id == rec.paper_id);
  CHECK(again.answers.size() == rec.answers.size());
  for (const auto &[id, a] : rec.answers) {
    CHECK(again.answers.at(id).values == a.values);
    CHECK(again.answers.at(id).rationale.has_value() == a.rationale.has_value());
  }
}

TEST_CASE("screening keeps only unanimous relevance") {
  auto records = parse_screening(load_structured(data_dir() / "fixtures/screening.json"));
  CHECK(records.size() == 20);
  CHECK(screen(records) == std::set<std::string>{"S01", "S05", "S10", "S11", "S14", "S17", "S19"});
  auto bad = parse_screening(load_structured(data_dir() / "fixtures/screening-bad.json"));
  CHECK(errc_of([&] { screen(bad); }) == Errc::pass_count_mismatch);
}

TEST_CASE("primary use selection") {
  std::vector<UseCandidate> c{{"a", true, 1, 3, 5, 2},
                              {"b", true, 2, 1, 1, 9},
                              {"c", false, 3, 5, 9, 0},
                              {"d", true, 2, 1, 1, 4},
                              {"e", true, 2, 1, 1, 4}};
  CHECK(select_primary_use(c).id == "d");
  c[3].volume = 0;
  CHECK(select_primary_use(c).id == "e");
  std::vector<UseCandidate> none{{"x", false, 3, 3, 3, 0}};
  CHECK(errc_of([&] { select_primary_use(none); }) == Errc::no_generative_candidate);
}

TEST_CASE("aggregation across runs") {
  auto run = [](std::string source, std::string q10, std::vector<std::string> q30) {
    CodedRecord r;
    r.paper_id = "P";
    r.source = std::move(source);
    r.answers["Q10"] = Answer{"Q10", {std::move(q10)}, {}};
    r.answers["Q30"] = Answer{"Q30", std::move(q30), {}};
    return r;
  };
  std::vector<CodedRecord> runs{run("model:1", "3", {"1", "2"}), run("model:2", "3", {"2", "1"}),
                                run("model:3", "4", {"1", "2"}), run("model:4", "4", {"3"}),
                                run("model:5", "5", {"1"})};
  auto agg = aggregate_runs(runs);
  // 2 of 5 is not a strict majority
  CHECK_FALSE(agg.consensus.answers.contains("Q10"));
  REQUIRE(agg.consensus.answers.contains("Q30"));
  CHECK(agg.consensus.answers.at("Q30").values.size() == 2);
  auto q10 = std::find_if(agg.dispersion.begin(), agg.dispersion.end(),
                          [](const ItemDispersion &d) { return d.item == "Q10"; });
  REQUIRE(q10 != agg.dispersion.end());
  CHECK_FALSE(q10->resolved);
  CHECK(q10->agreement == doctest::Approx(0.4));
  CHECK(q10->variants.size() == 3);

  runs[1].paper_id = "Q";
  CHECK(errc_of([&] { aggregate_runs(runs); }) == Errc::mixed_paper_ids);
  CHECK(errc_of([] { aggregate_runs(std::span<const CodedRecord>{}); }) == Errc::empty_input);
}

TEST_CASE("synthetic coded corpus is valid") {
  auto records = load_coded_dir(data_dir() / "fixtures/coded");
  CHECK(records.size() == 56);
  for (const auto &r : records)
    CHECK_MESSAGE(error_codes(validate_record(instrument(), r)).empty(), r.paper_id);
}

TEST_CASE("manifest paths resolve against the manifest") {
  auto records = load_manifest(data_dir() / "fixtures/corpus/manifest.json");
  REQUIRE(records.size() == 3);
  CHECK(std::filesystem::exists(records[0].text_path));
}
