#include "cli_config.hpp"
#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace hitl;
using namespace hitl::cli;

int main(int argc, char **argv) {
  CLI::App app{"Human-in-the-loop LLM pipeline orchestrator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hitl 0.1.0");

  CliOverrides flags;
  auto opt = [&](const char *name, auto &target, const char *help) {
    app.add_option(name, target, help);
  };
  opt("--config", flags.config_file, "Config file (YAML or JSON); also HITL_CONFIG");
  opt("--provider", flags.provider, "openai | deepseek | generic");
  opt("--base-url", flags.base_url, "Provider base URL");
  opt("--api-key-env", flags.api_key_env, "Environment variable holding the API key");
  opt("--cassette", flags.cassette, "Cassette file");
  opt("--mode", flags.mode, "live | record | replay");
  opt("--audit-dir", flags.audit_dir, "Directory of audit trails");
  opt("--parallelism", flags.parallelism, "Maximum concurrent provider calls");
  opt("--timeout", flags.timeout_s, "Per-call timeout in seconds");
  opt("--model", flags.model, "Model name");
  opt("--reasoning-effort", flags.reasoning_effort, "low | medium | high");
  opt("--verbosity", flags.verbosity, "low | medium | high");
  opt("--temperature", flags.temperature, "Sampling temperature");
  opt("--data-dir", flags.data_dir, "Directory with instrument, scaling and pipelines");

  std::string spec_path;
  auto *validate = app.add_subcommand("validate", "Check a pipeline spec");
  validate->add_option("spec", spec_path)->required();

  RunArgs run_args;
  auto *run = app.add_subcommand("run", "Start (or continue) a pipeline run");
  run->add_option("spec", run_args.spec)->required();
  run->add_option("--input,-i", run_args.inputs, "name=value or name=@file");
  run->add_option("--run-id", run_args.run_id);
  run->add_option("--parent", run_args.parent_run_id, "Run this one re-executes");
  run->add_option("--out", run_args.out, "Write the full run state here");

  std::string resume_id, resume_spec, resume_out;
  auto *resume = app.add_subcommand("resume", "Continue a run from its audit trail");
  resume->add_option("run_id", resume_id)->required();
  resume->add_option("--spec", resume_spec, "Expected spec; its digest must match");
  resume->add_option("--out", resume_out);

  auto *checkpoints = app.add_subcommand("checkpoints", "List or decide checkpoints");
  checkpoints->require_subcommand(1);
  std::string list_run;
  auto *list = checkpoints->add_subcommand("list", "Open checkpoints");
  list->add_option("--run", list_run);

  DecisionArgs decision;
  auto add_decision = [&](const char *name, const char *help, Verdict verdict) {
    auto *c = checkpoints->add_subcommand(name, help);
    c->add_option("run_id", decision.run_id)->required();
    c->add_option("stage", decision.stage)->required();
    c->add_option("--author", decision.author);
    c->add_option("--note", decision.note);
    c->add_flag("!--no-advance", decision.advance, "Record only; do not run successors");
    c->callback([&decision, verdict] { decision.verdict = verdict; });
    return c;
  };
  auto *approve = add_decision("approve", "Approve the stage output", Verdict::approve);
  auto *reject = add_decision("reject", "Reject and halt the run", Verdict::reject);
  auto *edit = add_decision("edit", "Replace the stage output and approve", Verdict::edit);
  edit->add_option("--artifact", decision.artifact_file, "File with the edited artifact")
      ->required();
  edit->add_option("--slot", decision.slot, "Slot to edit on fan-out stages");

  Exp1Args exp1_args;
  auto *exp1 = app.add_subcommand("exp1", "Evidence-count grid with and without abstention");
  exp1->add_option("--config", exp1_args.config);
  exp1->add_option("--letter", exp1_args.letter);
  exp1->add_option("--out", exp1_args.out, "Table CSV (stdout when omitted)");

  Exp2Args exp2_args;
  auto *exp2 = app.add_subcommand("exp2", "Baseline, two-stage and multi-stage regimes");
  exp2->add_option("--regime", exp2_args.regime, "baseline | two-stage | multi-stage | all");
  exp2->add_option("--config", exp2_args.config);
  exp2->add_flag("--auto-approve", exp2_args.auto_approve, "Approve every checkpoint");
  exp2->add_option("--out", exp2_args.out);
  exp2->add_option("--table3", exp2_args.table3, "Write two-stage vs multi-stage concordance CSV");

  std::string conc_csv, conc_out;
  auto *conc = app.add_subcommand("concordance", "Per-element score deltas from a score table");
  conc->add_option("table", conc_csv)->required();
  conc->add_option("--out", conc_out);

  CodeCorpusArgs corpus_args;
  auto *corpus = app.add_subcommand("code-corpus", "Code every paper in a manifest");
  corpus->add_option("manifest", corpus_args.manifest)->required();
  corpus->add_option("--out", corpus_args.out_dir)->required();
  corpus->add_option("--pipeline", corpus_args.pipeline);
  corpus->add_option("--instrument", corpus_args.instrument);

  std::string coded_dir, scaling_path, report_out;
  auto *indices = app.add_subcommand("indices", "Construct indices and correlations");
  indices->add_option("coded_dir", coded_dir)->required();
  indices->add_option("--scaling", scaling_path);
  indices->add_option("--out", report_out);
  auto *plane = app.add_subcommand("plane", "Per-paper index table");
  plane->add_option("coded_dir", coded_dir)->required();
  plane->add_option("--scaling", scaling_path);
  plane->add_option("--out", report_out);

  std::string screen_file;
  auto *screen_cmd = app.add_subcommand("screen", "Ids retained by all three screening passes");
  screen_cmd->add_option("records", screen_file)->required();
  screen_cmd->add_option("--out", report_out);

  ServeArgs serve_args;
  auto *serve = app.add_subcommand("serve", "Serve the control API");
  serve->add_option("--host", serve_args.host);
  serve->add_option("--port", serve_args.port);
  serve->add_option("--static", serve_args.static_dir, "Review UI assets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << error_line("usage", e.what()) << "\n";
    return 1;
  }

  try {
    if (*screen_cmd)
      return cmd_screen(screen_file, report_out, std::cout);
    if (*conc)
      return cmd_concordance(conc_csv, conc_out, std::cout);
    auto config = resolve_config(flags);
    if (*validate)
      return cmd_validate(config, spec_path, std::cout);
    if (*run)
      return cmd_run(config, run_args, std::cout);
    if (*resume)
      return cmd_resume(config, resume_id, resume_spec, resume_out, std::cout);
    if (*list)
      return cmd_checkpoints_list(config, list_run, std::cout);
    if (*approve || *reject || *edit)
      return cmd_decide(config, decision, std::cout);
    if (*exp1)
      return cmd_exp1(config, exp1_args, std::cout);
    if (*exp2)
      return cmd_exp2(config, exp2_args, std::cout);
    if (*corpus)
      return cmd_code_corpus(config, corpus_args, std::cout);
    if (*indices)
      return cmd_indices(config, coded_dir, scaling_path, report_out, std::cout);
    if (*plane)
      return cmd_plane(config, coded_dir, scaling_path, report_out, std::cout);
    if (*serve)
      return cmd_serve(config, serve_args);
  } catch (const Error &e) {
    std::cerr << error_line(e.code_name(), e.what()) << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception &e) {
    std::cerr << error_line("internal", e.what()) << "\n";
    return 1;
  }
  return 1;
}
