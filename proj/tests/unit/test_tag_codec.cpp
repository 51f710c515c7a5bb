#include <doctest.h>

#include "generators.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <hitl/artifact.hpp>
#include <hitl/tag_codec.hpp>

using namespace hitl;
using hitl::test::errc_of;

namespace {

OutputContract report_contract() {
  OutputContract c;
  c.kind = ContractKind::element_report;
  c.score_range = IntRange{0, 10};
  return c;
}

} // namespace

TEST_CASE("extract_blocks: first close wins, unclosed openings counted") {
  auto scan = extract_blocks("<e>a</e> <e>b<e>c</e> <e>d", "e");
  CHECK(scan.blocks == std::vector<std::string>{"a", "b<e>c"});
  CHECK(scan.nested == 1);
  CHECK(scan.malformed == 1);
  CHECK(scan.spans[0] == Span{3, 1});
  CHECK(extract_blocks("no tags", "e").blocks.empty());
  CHECK(extract_blocks("<e></e>", "").blocks.empty());
}

TEST_CASE("property: extract_blocks matches the reference scanner") {
  std::mt19937 rng(3);
  for (int i = 0; i < 2000; ++i) {
    auto soup = test::random_tag_soup(rng, "evidence");
    auto scan = extract_blocks(soup, "evidence");
    CHECK_MESSAGE(scan.blocks == oracle::scan_blocks(soup, "evidence"), soup);
    for (std::size_t k = 0; k < scan.blocks.size(); ++k)
      CHECK(soup.substr(scan.spans[k].offset, scan.spans[k].length) == scan.blocks[k]);
  }
}

TEST_CASE("evidence lists and abstention") {
  OutputContract c;
  c.kind = ContractKind::evidence_list;
  c.abstention = AbstentionPolicy{std::string(kDefaultAbstentionMarker), true};
  auto list = parse_evidence_list("<evidence>x</evidence>\n<evidence>y</evidence>", c);
  CHECK(list.items.size() == 2);
  CHECK_FALSE(list.abstained);
  auto abstain = parse_evidence_list("Well...  there is NO evidence\nfor that!", c);
  CHECK(abstain.items.empty());
  CHECK(abstain.abstained);
  CHECK(parse_evidence_list(format_evidence_list(list, c), c) == list);
  CHECK(parse_evidence_list(format_evidence_list(abstain, c), c) == abstain);
  c.abstention->enabled = false;
  CHECK_FALSE(parse_evidence_list("There is no evidence for that!", c).abstained);
  CHECK(count_evidence("<evidence>a</evidence><evidence>b", AbstentionPolicy{}) ==
        EvidenceCount{1, false, 1});
}

TEST_CASE("element report parsing") {
  auto c = report_contract();
  auto r = parse_element_report(
      "[1] X - <explanation> Present. </explanation> - <quotations> <quote2>\"b\"</quote2>, "
      "<quote1>\"a\"</quote1> </quotations> - <score>9</score>",
      c);
  CHECK(r.explanation == "Present.");
  CHECK(r.quotations == std::vector<std::string>{"\"a\"", "\"b\""});
  CHECK(r.score == 9);

  auto zero = parse_element_report("<explanation>Absent</explanation><quotations></quotations><score>0</score>", c);
  CHECK(zero.quotations.empty());

  CHECK(errc_of([&] { parse_element_report("<score>3</score>", c); }) == Errc::missing_explanation);
  CHECK(errc_of([&] { parse_element_report("<explanation>e</explanation>", c); }) ==
        Errc::missing_score);
  CHECK(errc_of([&] { parse_element_report("<explanation>e</explanation><score>7.5</score>", c); }) ==
        Errc::non_integer_score);
  CHECK(errc_of([&] { parse_element_report("<explanation>e</explanation><score>11</score>", c); }) ==
        Errc::score_out_of_range);
  CHECK(errc_of([&] { parse_element_report("<explanation>e</explanation><score>4</score>", c); }) ==
        Errc::missing_quotations);
}

TEST_CASE("multi-report responses honour cardinality") {
  auto c = report_contract();
  c.enum_range = IntRange{2, 3};
  std::mt19937 rng(1);
  std::vector<TaggedReport> three{test::random_report(rng), test::random_report(rng),
                                  test::random_report(rng)};
  CHECK(parse_element_reports(format_reports(three), c) == three);
  std::vector<TaggedReport> one{three[0]};
  CHECK(errc_of([&] { parse_element_reports(format_reports(one), c); }) ==
        Errc::cardinality_violation);
  CHECK(errc_of([&] { parse_element_reports("nothing here", c); }) == Errc::missing_explanation);
}

TEST_CASE("property: format then parse is the identity") {
  std::mt19937 rng(42);
  auto c = report_contract();
  for (int i = 0; i < 1000; ++i) {
    auto r = test::random_report(rng);
    auto text = format_report(r);
    auto back = parse_element_report(text, c);
    REQUIRE_MESSAGE(back == r, text);
    CHECK(format_report(back) == text);
  }
}

TEST_CASE("structured regions") {
  CHECK(extract_structured("prefix {\"a\": [1, {\"b\": \"}\"}]} suffix") ==
        nlohmann::json::parse(R"({"a": [1, {"b": "}"}]})"));
  CHECK(extract_structured("see {not this}\n```json\n[{\"k\": 2}]\n```\n") ==
        nlohmann::json::parse(R"([{"k": 2}])"));
  // a bare list of scalars reads as prose, e.g. a citation marker
  CHECK(errc_of([] { extract_structured("as shown in [1, 2]"); }) == Errc::no_structured_region);
  CHECK(errc_of([] { extract_structured("plain prose"); }) == Errc::no_structured_region);
  CHECK(errc_of([] { extract_structured("{\"a\": [1, 2}"); }) == Errc::malformed_structure);
  try {
    extract_structured("xx {\"a\": tru}");
    FAIL("expected malformed_structure");
  } catch (const Error &e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
}

TEST_CASE("elements schema") {
  auto make = [](int n, bool dup = false) {
    nlohmann::json dims = nlohmann::json::array();
    for (int i = 0; i < n; ++i)
      dims.push_back({{"element_key", dup && i == 1 ? "k0" : "k" + std::to_string(i)},
                      {"element_label", "L" + std::to_string(i)},
                      {"short_definition", "d"},
                      {"identification_rubric", {"r"}},
                      {"evidence_expectations", "e"}});
    return "Here:\n```json\n" + nlohmann::json{{"dimensions", dims}}.dump() + "\n```";
  };
  auto schema = parse_elements_schema(make(12));
  CHECK(schema.elements.size() == 12);
  CHECK(schema.elements[3].key == "k3");
  CHECK(schema.elements[3].evidence == std::vector<std::string>{"e"});
  CHECK(parse_elements_schema(format_schema(schema)) == schema);
  CHECK(errc_of([&] { parse_elements_schema(make(9)); }) == Errc::cardinality_violation);
  CHECK(errc_of([&] { parse_elements_schema(make(21)); }) == Errc::cardinality_violation);
  CHECK(errc_of([&] { parse_elements_schema(make(12, true)); }) == Errc::duplicate_key);
  CHECK(errc_of([&] { parse_elements_schema("{\"other\": 1}"); }) == Errc::malformed_structure);
}

TEST_CASE("verify_quote") {
  const std::string source =
      "Choose as judges the best of your people, those least troubled by the repeated\n"
      "visits of a litigant.   Review their judgements often and pay them enough.";
  SUBCASE("full match across whitespace differences") {
    auto q = verify_quote("those least troubled by the repeated visits of a litigant.", source);
    CHECK(q.verified);
    REQUIRE(q.segments.size() == 1);
    CHECK(source.substr(q.segments[0].offset, q.segments[0].length) ==
          "those least troubled by the repeated\nvisits of a litigant.");
  }
  SUBCASE("in-order ellipsis") {
    CHECK(verify_quote("\"Choose as judges ... Review their judgements often\"", source).verified);
    CHECK(verify_quote("Choose as judges \xE2\x80\xA6 pay them enough.", source).verified);
  }
  SUBCASE("out-of-order segments are rejected") {
    auto q = verify_quote("Review their judgements often ... Choose as judges", source);
    CHECK_FALSE(q.verified);
    CHECK(q.segments.empty());
  }
  SUBCASE("fabricated") {
    CHECK_FALSE(verify_quote("judges must be elected", source).verified);
    CHECK_FALSE(verify_quote("...", source).verified);
  }
}

TEST_CASE("artifacts dispatch on contract kind") {
  OutputContract free;
  auto a = parse_artifact("anything", free);
  CHECK(a.kind == ContractKind::free_text);
  CHECK(a.text == "anything");
  auto c = report_contract();
  auto r = parse_artifact("<explanation>e</explanation><quotations><quote1>q</quote1></quotations><score>5</score>", c);
  REQUIRE(r.reports().size() == 1);
  CHECK(r.text == format_report(r.reports()[0]));
  CHECK(artifact_to_json(r)["kind"] == "element-report");
  OutputContract answers;
  answers.kind = ContractKind::answer_record;
  auto rec = parse_artifact("Sure:\n{\"answers\": {\"Q00\": {\"value\": \"YES\"}}}", answers);
  CHECK(rec.kind == ContractKind::answer_record);
}
