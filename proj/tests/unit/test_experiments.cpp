#include <doctest.h>

#include "oracles.hpp"
#include "support.hpp"

#include <hitl/experiments.hpp>
#include <hitl/pipeline_io.hpp>
#include <hitl/text_util.hpp>

#include <random>

using namespace hitl;
using hitl::test::data_dir;
using hitl::test::errc_of;

namespace {

std::string replace_all(std::string s, const std::string &from, const std::string &to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

const char *kMarkerSentence = "Or, you can say: 'There is no evidence for that!'";

} // namespace

TEST_CASE("summarize_counts on the reconstructible cells") {
  std::vector<int> outlier(49, 0);
  outlier.push_back(8);
  auto s = summarize_counts(outlier);
  CHECK(s.mean == doctest::Approx(0.16));
  CHECK(s.sd == doctest::Approx(1.1314).epsilon(1e-4));
  CHECK(text::fixed(s.sd, 2) == "1.13");
  CHECK(s.zero_runs == 49);
  auto zeros = summarize_counts(std::vector<int>(50, 0));
  CHECK(zeros.mean == 0.0);
  CHECK(zeros.sd == 0.0);
  CHECK(zeros.zero_runs == 50);
  CHECK(summarize_counts(std::vector<int>{7}).sd == 0.0);
  CHECK(errc_of([] { summarize_counts(std::vector<int>{}); }) == Errc::empty_input);
}

TEST_CASE("property: summarize_counts matches a two-pass oracle") {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    int n = std::uniform_int_distribution<int>(1, 200)(rng);
    int hi = std::uniform_int_distribution<int>(0, 1000)(rng);
    std::vector<int> xs(n);
    for (auto &x : xs)
      x = std::uniform_int_distribution<int>(0, hi)(rng);
    auto s = summarize_counts(xs);
    auto o = oracle::mean_sd(xs);
    auto rel = [](double a, long double b) {
      return std::abs(a - static_cast<double>(b)) / std::max(1.0L, std::abs(b));
    };
    CHECK(rel(s.mean, o.mean) < 1e-9);
    CHECK(rel(s.sd, o.sd) < 1e-9);
  }
}

TEST_CASE("grid prompts differ only by range phrase and marker sentence") {
  auto cfg = load_grid_config(data_dir() / "experiments/exp1.yaml");
  REQUIRE(cfg.conditions.size() == 4);
  CHECK(abstention_clause(cfg) == std::string(" ") + kMarkerSentence);
  std::string letter = "LETTER BODY";
  std::set<std::string> normalized;
  for (const auto &cond : cfg.conditions) {
    auto p = grid_prompt(cfg, cond, letter);
    auto phrase = grid_range_phrase(cfg, cond.enum_range);
    CHECK(phrase == std::to_string(cond.enum_range.lo) + " and " + std::to_string(cond.enum_range.hi));
    CHECK((p.find(kMarkerSentence) != std::string::npos) == cond.abstention_enabled);
    CHECK(p.find(letter) != std::string::npos);
    normalized.insert(replace_all(replace_all(p, std::string(" ") + kMarkerSentence, ""), phrase, "<R>"));
  }
  CHECK(normalized.size() == 1);
}

TEST_CASE("grid pipeline shape") {
  auto cfg = load_grid_config(data_dir() / "experiments/exp1.yaml");
  GridCondition cond{{1, 10}, true, 50};
  auto spec = grid_pipeline(cfg, cond);
  CHECK(validate_pipeline(spec).empty());
  CHECK(spec.id == "exp1-1-10-abstain");
  const auto &st = spec.stages.at(0);
  CHECK(st.runs == 50);
  CHECK(st.prompt.required_bindings == std::set<std::string>{"letter"});
  CHECK(st.contract.abstention->enabled);
  CHECK(cond.label() == "1-10/yes");
  CHECK(default_grid(5).size() == 4);
}

TEST_CASE("abstention grid replays from the shipped cassette") {
  auto cfg = load_grid_config(data_dir() / "experiments/exp1.yaml");
  auto letter = text::read_file(cfg.letter_path);
  test::TempDir dir;
  Cassette cassette(CassetteMode::replay, data_dir() / "cassettes/exp1.jsonl");
  Gateway gw(test::offline_config(), nullptr);
  AuditStore store(dir / "a");
  Orchestrator orch(gw, store);
  auto cells = run_abstention_grid(orch, cfg, letter, cfg.params, cassette);
  REQUIRE(cells.size() == 4);
  auto csv = table2_csv(cells);
  CHECK(csv.find("0-10/yes,0.00,0.00,50") != std::string::npos);
  CHECK(csv.find("1-10/yes,0.16,1.13,49") != std::string::npos);
  for (const auto &c : cells) {
    CHECK(c.failures.empty());
    CHECK(grid_counts_from_trail(orch.trail(c.run_id)) == c.stats.counts);
  }
  CHECK(cells[2].abstained == 50);
  CHECK(errc_of([&] { run_abstention_grid(orch, cfg, "", cfg.params, cassette); }) ==
        Errc::missing_binding);
}

TEST_CASE("concordance") {
  auto table = load_score_table(data_dir() / "fixtures/table3.csv");
  CHECK(table.keys.size() == 17);
  auto c = concordance(table.a, table.b);
  CHECK(c.max_delta == 2);
  CHECK(c.per_element.at("amendment").delta == 2);
  auto csv = table3_csv(c, table.keys);
  CHECK(csv.starts_with("element,score_a,score_b,delta\nlegal_limits,9,9,0\n"));
  auto b = table.b;
  b.erase("rights");
  CHECK(errc_of([&] { concordance(table.a, b); }) == Errc::key_mismatch);
  CHECK(errc_of([] { parse_score_table("k,e,a,b\nx,X,1,2\nx,X,3,4\n"); }) == Errc::duplicate_key);
  auto quoted = parse_score_table("k,e,a,b\ny,\"Label, with comma\",1,2\n");
  CHECK(quoted.labels.at("y") == "Label, with comma");
}

TEST_CASE("regimes replay from the shipped cassette") {
  auto doc = load_structured(data_dir() / "experiments/exp2.yaml");
  auto base = data_dir() / "experiments";
  RegimeInputs inputs;
  inputs.letter = text::read_file(base / doc["letter"].get<std::string>());
  inputs.seed_corpus = text::read_file(base / doc["seed"].get<std::string>());
  auto params = parse_run_params(doc["params"]);
  test::TempDir dir;
  Cassette cassette(CassetteMode::replay, data_dir() / "cassettes/exp2.jsonl");
  Gateway gw(test::offline_config(), nullptr);
  AuditStore store(dir / "a");
  Orchestrator orch(gw, store);
  auto table = load_score_table(data_dir() / "fixtures/table3.csv");

  auto two = run_regime(orch, load_pipeline(base / "../pipelines/two-stage.yaml"), Regime::two_stage,
                        inputs, params, cassette);
  auto multi = run_regime(orch, load_pipeline(base / "../pipelines/multi-stage.yaml"),
                          Regime::multi_stage, inputs, params, cassette);
  CHECK(two.status == RunStatus::complete);
  CHECK(multi.status == RunStatus::complete);
  CHECK(two.scores() == table.a);
  CHECK(multi.scores() == table.b);
  CHECK(multi.score_vector().size() == 17);
  REQUIRE(multi.synthesis);
  CHECK(multi.synthesis->find("Summary table") != std::string::npos);

  auto baseline = run_regime(orch, load_pipeline(base / "../pipelines/baseline.yaml"),
                             Regime::baseline, inputs, params, cassette);
  CHECK(baseline.status == RunStatus::complete);
  CHECK(baseline.reports.empty());

  RegimeInputs none;
  none.letter = inputs.letter;
  CHECK(errc_of([&] {
          run_regime(orch, load_pipeline(base / "../pipelines/two-stage.yaml"), Regime::two_stage,
                     none, params, cassette);
        }) == Errc::missing_binding);
  CHECK(parse_regime("multi-stage") == Regime::multi_stage);
  CHECK_FALSE(parse_regime("four-stage"));
}

TEST_CASE("a pre-approved schema replaces the proposal") {
  auto schema_of = [](int n, const std::string &prefix) {
    ElementSchema schema;
    for (int i = 0; i < n; ++i)
      schema.elements.push_back({prefix + std::to_string(i), "E" + std::to_string(i), "d", {}, {}});
    return schema;
  };
  auto proposed = format_schema(schema_of(12, "model"));
  test::ScriptedProvider p([&](const std::string &prompt) -> std::string {
    if (prompt.find("<SEP>") != std::string::npos)
      return proposed;
    if (prompt.find("Assess only element number ") != std::string::npos)
      return "<explanation>x</explanation><quotations></quotations><score>0</score>";
    return "final";
  });
  test::TempDir dir;
  Gateway gw(test::offline_config(1), p.transport());
  AuditStore store(dir / "a");
  Orchestrator orch(gw, store);
  Cassette live(CassetteMode::live);
  RegimeInputs inputs;
  inputs.letter = "L";
  inputs.approved_schema = schema_of(10, "human");
  auto report = run_regime(orch, load_pipeline(data_dir() / "pipelines/multi-stage.yaml"),
                           Regime::multi_stage, inputs, test::test_params(), live);
  CHECK(report.status == RunStatus::complete);
  REQUIRE(report.schema);
  CHECK(*report.schema == *inputs.approved_schema);
  CHECK(report.reports.size() == 10);
  CHECK(report.reports.contains("human3"));
  // the seed was bound empty
  CHECK(p.prompts().front().find("<SEP>\n\n</SEP>") != std::string::npos);
  CHECK(p.calls() == 1 + 10 + 1);
}
