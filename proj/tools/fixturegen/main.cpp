// Records the shipped cassettes against the synthetic provider and writes the
// synthetic coded corpus. Run from anywhere; paths are relative to --data-dir.
#include "synthetic_provider.hpp"

#include <hitl/codebook.hpp>
#include <hitl/experiments.hpp>
#include <hitl/orchestrator.hpp>
#include <hitl/pipeline_io.hpp>
#include <hitl/text_util.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <random>

namespace fs = std::filesystem;
using namespace hitl;
using nlohmann::json;

namespace {

struct Env {
  fs::path data;
  fs::path scratch;
  std::shared_ptr<fixturegen::SyntheticProvider> provider;

  Gateway gateway() const {
    GatewayConfig config;
    config.api_key_env = "";
    config.max_in_flight = 1;
    config.max_retries = 0;
    auto p = provider;
    return Gateway(config, std::make_shared<FunctionTransport>(
                               [p](const HttpRequest &r) { return (*p)(r); }));
  }
};

void fresh(const fs::path &p) {
  fs::remove(p);
  fs::create_directories(p.parent_path());
}

void record_exp1(const Env &env) {
  auto cfg = load_grid_config(env.data / "experiments/exp1.yaml");
  auto letter = text::read_file(cfg.letter_path);
  auto path = env.data / "cassettes/exp1.jsonl";
  fresh(path);
  Cassette cassette(CassetteMode::record, path);
  auto gw = env.gateway();
  AuditStore store(env.scratch / "exp1");
  Orchestrator orch(gw, store);
  // Conditions one at a time so the provider's call order is stable.
  for (const auto &cond : cfg.conditions) {
    auto one = cfg;
    one.conditions = {cond};
    auto cells = run_abstention_grid(orch, one, letter, cfg.params, cassette);
    std::cout << table2_csv(cells);
  }
}

void record_exp2(const Env &env) {
  auto doc = load_structured(env.data / "experiments/exp2.yaml");
  auto base = env.data / "experiments";
  RegimeInputs inputs;
  inputs.letter = text::read_file(base / doc.at("letter").get<std::string>());
  inputs.seed_corpus = text::read_file(base / doc.at("seed").get<std::string>());
  auto params = parse_run_params(doc.at("params"));
  auto path = env.data / "cassettes/exp2.jsonl";
  fresh(path);
  Cassette cassette(CassetteMode::record, path);
  auto gw = env.gateway();
  AuditStore store(env.scratch / "exp2");
  Orchestrator orch(gw, store);
  for (auto r : {Regime::baseline, Regime::two_stage, Regime::multi_stage}) {
    auto spec = load_pipeline(base / doc.at("pipelines").at(std::string(to_string(r))).get<std::string>());
    auto report = run_regime(orch, spec, r, inputs, params, cassette);
    std::cout << to_string(r) << " " << to_string(report.status) << " "
              << report.reports.size() << " reports\n";
  }
}

void record_code_corpus(const Env &env) {
  auto instrument = load_instrument(env.data / "instrument.json");
  auto spec = load_pipeline(env.data / "pipelines/code-paper.yaml");
  auto records = load_manifest(env.data / "fixtures/corpus/manifest.json");
  auto path = env.data / "cassettes/code-corpus.jsonl";
  fresh(path);
  Cassette cassette(CassetteMode::record, path);
  auto gw = env.gateway();
  AuditStore store(env.scratch / "code");
  Orchestrator orch(gw, store);
  RunParams params{"deepseek-chat", 0.0, std::nullopt, std::nullopt, std::nullopt};
  auto instrument_text = format_instrument(instrument);
  for (const auto &rec : records) {
    Bindings inputs{{"instrument", instrument_text},
                    {"title", rec.title},
                    {"abstract", rec.abstract},
                    {"text", text::read_file(rec.text_path)}};
    auto state = orch.run(spec, inputs, params, cassette);
    std::cout << rec.id << " " << to_string(state.status) << "\n";
  }
}

// Synthetic coded records spanning the three constructs. Depth and autonomy
// are drawn from a shared latent so the plane is not uniform noise.
void write_coded_corpus(const Env &env, int n, unsigned seed) {
  auto instrument = load_instrument(env.data / "instrument.json");
  auto dir = env.data / "fixtures/coded";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::mt19937 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto clamp_pick = [&](double centre, int lo, int hi) {
    std::normal_distribution<double> d(centre, 0.8);
    return std::clamp(static_cast<int>(std::lround(d(rng))), lo, hi);
  };
  auto with_reason = [](const std::string &v) {
    return json{{"value", v},
                {"rationale",
                 {{"text", "Stated in the methods section."},
                  {"quotes", json::array({"as described in the methods section"})}}}};
  };
  for (int i = 1; i <= n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "C%03d", i);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double latent = u(rng);
    json a = json::object();
    a["Q00"] = with_reason("YES");
    a["Q01"] = {{"value", std::string("Synthetic study ") + id}};
    a["Q02"] = {{"value", std::vector<std::string>{"CS", "SOCIAL", "HUMANITIES", "LAW"}[pick(0, 3)]}};
    a["Q10"] = with_reason(std::to_string(clamp_pick(1 + 4 * latent, 1, 5)));
    a["Q11"] = with_reason(std::to_string(clamp_pick(2 * latent, 0, 2)));
    a["Q12"] = with_reason(std::to_string(clamp_pick(3 * latent, 0, 3)));
    a["Q13"] = with_reason(std::to_string(clamp_pick(4 * latent, 0, 4)));
    a["Q14"] = with_reason(std::to_string(clamp_pick(1 + 2 * latent, 1, 3)));
    a["Q15"] = with_reason(std::to_string(clamp_pick(1 + 4 * latent, 1, 5)));
    a["Q16"] = with_reason(std::to_string(clamp_pick(3 - 3 * latent, 0, 3)));
    a["Q17"] = with_reason(std::to_string(clamp_pick(3 - 3 * latent, 0, 3)));
    a["Q18"] = with_reason(latent > 0.8 ? "AGENTIC" : (pick(0, 1) ? "FIXED" : "INTERACTIVE"));
    a["Q22"] = with_reason(std::to_string(pick(0, 3)));
    a["Q23"] = with_reason(std::to_string(pick(0, 3)));
    a["Q25"] = with_reason(pick(0, 1) ? "YES" : "NO");
    a["Q27"] = with_reason(std::vector<std::string>{"VERBATIM", "REPOSITORY", "PARTIAL", "NO"}[pick(0, 3)]);
    json q29 = json::array();
    for (const char *c : {"1", "2", "3"})
      if (pick(0, 2) == 0)
        q29.push_back(c);
    if (q29.empty())
      q29.push_back("NONE");
    a["Q29"] = with_reason("");
    a["Q29"]["value"] = q29;
    a["Q30"] = with_reason("");
    a["Q30"]["value"] = pick(0, 3) == 0 ? json::array({"NONE"}) : json::array({std::to_string(pick(1, 3))});
    a["Q31"] = with_reason(pick(0, 1) ? "YES" : "NO");
    a["Q32"] = with_reason(std::vector<std::string>{"NO", "BRIEF", "DETAILED"}[pick(0, 2)]);
    a["Q33"] = with_reason(std::vector<std::string>{"NONE", "HUMAN_HUMAN", "HUMAN_LLM", "BOTH"}[pick(0, 3)]);
    // A few records leave items unreported.
    if (pick(0, 9) == 0)
      a["Q13"] = with_reason("NR");
    auto rec = parse_coded_record(json{{"paper_id", id}, {"source", "human"}, {"answers", a}});
    auto problems = validate_record(instrument, rec);
    if (!problems.empty())
      throw Error(Errc::contract_violation,
                  std::string(id) + ": " + problems.front().item + " " + problems.front().message);
    text::write_file(dir / (std::string(id) + ".json"), coded_record_json(rec).dump(2) + "\n");
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Regenerate synthetic cassettes and fixtures"};
  std::string data_dir = HITL_DEFAULT_DATA_DIR;
  int n_coded = 56;
  unsigned seed = 20251017;
  app.add_option("--data-dir", data_dir);
  app.add_option("--coded", n_coded);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);
  try {
    Env env;
    env.data = data_dir;
    env.scratch = fs::temp_directory_path() / "hitl-fixturegen";
    fs::remove_all(env.scratch);
    env.provider = std::make_shared<fixturegen::SyntheticProvider>(
        load_score_table(env.data / "fixtures/table3.csv"));
    record_exp1(env);
    record_exp2(env);
    record_code_corpus(env);
    write_coded_corpus(env, n_coded, seed);
    fs::remove_all(env.scratch);
  } catch (const std::exception &e) {
    std::cerr << "fixturegen: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
