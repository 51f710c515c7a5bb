#include <doctest.h>

#include "support.hpp"

#include <hitl/pipeline_io.hpp>

using namespace hitl;
using hitl::test::data_dir;
using hitl::test::errc_of;

TEST_CASE("shipped pipelines load and validate") {
  for (auto name : {"baseline", "two-stage", "multi-stage", "code-paper"}) {
    auto spec = load_pipeline(data_dir() / "pipelines" / (std::string(name) + ".yaml"));
    INFO(name);
    CHECK(validate_pipeline(spec).empty());
  }
}

TEST_CASE("multi-stage shape") {
  auto spec = load_pipeline(data_dir() / "pipelines/multi-stage.yaml");
  REQUIRE(spec.stages.size() == 3);
  const auto &schema = spec.stages[0];
  CHECK(schema.checkpoint);
  CHECK(schema.approves == ApprovalTarget::parsed_output);
  CHECK(schema.contract.kind == ContractKind::elements_schema);
  CHECK(schema.contract.enum_range == IntRange{10, 20});
  const auto &apply = spec.stages[1];
  CHECK(apply.fanout.mode == FanoutMode::per_dimension);
  CHECK(apply.fanout.dimensions_from == "schema");
  CHECK(apply.bindings.at("i") == "fanout.index");
  CHECK(spec.report_stage == "synthesis");
  CHECK(spec.metadata.at("regime") == "multi-stage");
}

TEST_CASE("inline yaml with shorthand forms") {
  auto spec = parse_pipeline(R"(
id: tiny
report_stage: b
stages:
  - id: a
    kind: extract
    prompt: "Segment {seg}"
    contract: free-text
    fanout: {mode: per-segment, segment_input: doc, segmenter: paragraphs}
    bindings: {seg: fanout.item}
  - id: b
    kind: apply
    contract: free-text
    prompt: "Combine {prior}"
    bindings: {prior: stage.a}
    fanout: {mode: per-dimension, dimensions: [1, 2, 3]}
edges:
  - {from: a, to: b}
)", ".");
  CHECK(validate_pipeline(spec).empty());
  CHECK(spec.stages[1].fanout.dimensions == std::vector<std::string>{"1", "2", "3"});
  CHECK(spec.edges.at(0) == Edge{"a", "b"});
}

TEST_CASE("yaml scalars keep their types") {
  auto j = yaml_to_json("a: 1\nb: 0.5\nc: '1'\nd: true\ne: ~\nf: 1e3x\n");
  CHECK(j["a"] == 1);
  CHECK(j["b"] == 0.5);
  CHECK(j["c"] == "1");
  CHECK(j["d"] == true);
  CHECK(j["e"].is_null());
  CHECK(j["f"] == "1e3x");
}

TEST_CASE("bad input is a config error") {
  CHECK(errc_of([] { parse_pipeline("stages: [", "."); }) == Errc::config_error);
  CHECK(errc_of([] { parse_pipeline("- 1\n- 2\n", "."); }) == Errc::config_error);
  CHECK(errc_of([] { load_pipeline("/nonexistent/pipeline.yaml"); }) == Errc::io_error);
}
