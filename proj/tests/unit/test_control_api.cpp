#include <doctest.h>

#include "support.hpp"

#include <hitl/control_api.hpp>
#include <hitl/run_manager.hpp>

#include <httplib.h>

#include <chrono>
#include <thread>

using namespace hitl;
using nlohmann::json;

namespace {

const std::string kLetter = "Keep every covenant you make. Review their judgements often.";

PipelineSpec review_spec() {
  PipelineSpec spec;
  spec.id = "review";
  Stage score;
  score.id = "score";
  score.prompt = PromptTemplate::from_text("Score {letter}");
  score.contract.kind = ContractKind::element_report;
  score.checkpoint = true;
  score.approves = ApprovalTarget::parsed_output;
  Stage after;
  after.id = "after";
  after.prompt = PromptTemplate::from_text("Continue from {prior}");
  after.bindings = {{"prior", "stage.score"}};
  spec.stages = {score, after};
  spec.edges = {{"score", "after"}};
  spec.report_stage = "after";
  return spec;
}

std::string reply(const std::string &prompt) {
  if (prompt.starts_with("Score"))
    return "<explanation>e</explanation><quotations><quote1>\"Keep every covenant you make.\"</quote1>"
           "<quote2>judges are elected</quote2></quotations><score>6</score>";
  return "continued";
}

struct Server {
  test::TempDir dir;
  test::ScriptedProvider provider{reply};
  Gateway gateway{test::offline_config(), provider.transport()};
  AuditStore store{dir / "audit"};
  Orchestrator orch{gateway, store};
  Cassette cassette{CassetteMode::live};
  RunManager runs{orch, cassette};
  ControlApi api{runs};
  std::string run_id;

  Server() {
    run_id = orch.run(review_spec(), {{"letter", kLetter}}, test::test_params(), cassette).run_id;
  }

  json decision(const std::string &verdict, std::optional<std::string> artifact = {}) {
    json d{{"checkpoint", "score"}, {"verdict", verdict}, {"author", "reviewer"}, {"note", ""}};
    if (artifact)
      d["edited_artifact"] = *artifact;
    return d;
  }
};

} // namespace

TEST_CASE("listing runs and checkpoints") {
  Server s;
  auto runs = s.api.handle("GET", "/api/v1/runs", "");
  CHECK(runs.status == 200);
  REQUIRE(runs.body["runs"].size() == 1);
  CHECK(runs.body["runs"][0]["status"] == "awaiting-approval");

  auto cps = s.api.handle("GET", "/api/v1/checkpoints", "");
  REQUIRE(cps.body["checkpoints"].size() == 1);
  const auto &view = cps.body["checkpoints"][0];
  CHECK(view["stage"] == "score");
  CHECK(view["slots"][0]["artifact"]["kind"] == "element-report");
  const auto &checks = view["slots"][0]["quote_checks"][0];
  REQUIRE(checks.size() == 2);
  CHECK(checks[0]["verified"] == true);
  CHECK(checks[1]["verified"] == false);

  auto one = s.api.handle("GET", "/api/v1/runs/" + s.run_id, "");
  CHECK(one.status == 200);
  CHECK(one.body["run_id"] == s.run_id);
  CHECK(s.api.handle("GET", "/api/v1/runs/" + s.run_id + "/checkpoints", "").body["checkpoints"].size() == 1);
}

TEST_CASE("audit paging") {
  Server s;
  auto page = s.api.handle("GET", "/api/v1/runs/" + s.run_id + "/audit?offset=1&limit=2", "");
  CHECK(page.status == 200);
  CHECK(page.body["total"] == 5);
  REQUIRE(page.body["events"].size() == 2);
  CHECK(page.body["events"][0]["seq"] == 2);
}

TEST_CASE("decisions: approve unblocks, stale is a conflict, bad edits are 422") {
  Server s;
  auto path = "/api/v1/runs/" + s.run_id + "/decisions";

  auto bad = s.api.handle("POST", path, s.decision("edit", "<score>3</score>").dump());
  CHECK(bad.status == 422);
  CHECK(bad.body["error"]["code"] == "contract-violation");
  CHECK(s.api.handle("POST", path, "{oops").status == 400);
  CHECK(s.api.handle("POST", path, json{{"verdict", "approve"}}.dump()).status == 400);

  auto ok = s.api.handle("POST", path, s.decision("approve").dump());
  CHECK(ok.status == 202);
  s.runs.wait_idle();
  CHECK(s.runs.state(s.run_id).status == RunStatus::complete);
  CHECK(s.provider.calls() == 2);

  auto events_before = s.runs.trail(s.run_id).size();
  auto stale = s.api.handle("POST", path, s.decision("approve").dump());
  CHECK(stale.status == 409);
  CHECK(stale.body["error"]["code"] == "not-awaiting");
  CHECK(s.runs.trail(s.run_id).size() == events_before);
}

TEST_CASE("unknown things are 404") {
  Server s;
  CHECK(s.api.handle("GET", "/api/v1/runs/nope", "").status == 404);
  CHECK(s.api.handle("GET", "/api/v1/elsewhere", "").status == 404);
  CHECK(s.api.handle("DELETE", "/api/v1/runs/" + s.run_id, "").status == 404);
  CHECK(s.api.handle("GET", "/index.html", "").status == 404);
}

TEST_CASE("http round trip on an ephemeral port") {
  Server s;
  ApiServer server(s.api);
  int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);
  auto list = client.Get("/api/v1/checkpoints");
  REQUIRE(list);
  CHECK(list->status == 200);
  CHECK(json::parse(list->body)["checkpoints"].size() == 1);

  auto res = client.Post("/api/v1/runs/" + s.run_id + "/decisions", s.decision("approve").dump(),
                         "application/json");
  REQUIRE(res);
  CHECK(res->status == 202);

  // poll until the continuation lands
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  std::string status;
  while (std::chrono::steady_clock::now() < deadline) {
    auto r = client.Get("/api/v1/runs/" + s.run_id);
    status = json::parse(r->body)["status"].get<std::string>();
    if (status == "complete")
      break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  CHECK(status == "complete");
  auto stale = client.Post("/api/v1/runs/" + s.run_id + "/decisions", s.decision("reject").dump(),
                           "application/json");
  REQUIRE(stale);
  CHECK(stale->status == 409);
  server.stop();
}
