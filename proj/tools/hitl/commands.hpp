#pragma once

#include "cli_config.hpp"

#include <hitl/error.hpp>
#include <hitl/orchestrator.hpp>

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hitl::cli {

// 0 ok, 2 validation, 3 provider, 4 checkpoint state, 5 config, 1 other.
int exit_code_for(Errc code) noexcept;
// {"error": {"code": ..., "message": ...}}
std::string error_line(std::string_view code, std::string_view message);

struct Services {
  explicit Services(const CliConfig &config);

  Gateway gateway;
  AuditStore store;
  Cassette cassette;
  Orchestrator orchestrator;
};

struct RunArgs {
  std::string spec;
  std::vector<std::string> inputs;
  std::string run_id;
  std::string parent_run_id;
  std::string out;
};

struct DecisionArgs {
  std::string run_id;
  std::string stage;
  Verdict verdict = Verdict::approve;
  std::string artifact_file;
  std::optional<int> slot;
  std::string author;
  std::string note;
  bool advance = true;
};

struct Exp1Args {
  std::string config;
  std::string letter;
  std::string out;
};

struct Exp2Args {
  std::string regime = "all";
  std::string config;
  bool auto_approve = false;
  std::string out;
  std::string table3;
};

struct CodeCorpusArgs {
  std::string manifest;
  std::string out_dir;
  std::string pipeline;
  std::string instrument;
};

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
};

int cmd_validate(const CliConfig &config, const std::string &spec_path, std::ostream &out);
int cmd_run(const CliConfig &config, const RunArgs &args, std::ostream &out);
int cmd_resume(const CliConfig &config, const std::string &run_id, const std::string &spec_path,
               const std::string &out_path, std::ostream &out);
int cmd_checkpoints_list(const CliConfig &config, const std::string &run_id, std::ostream &out);
int cmd_decide(const CliConfig &config, const DecisionArgs &args, std::ostream &out);
int cmd_exp1(const CliConfig &config, const Exp1Args &args, std::ostream &out);
int cmd_exp2(const CliConfig &config, const Exp2Args &args, std::ostream &out);
int cmd_concordance(const std::string &csv_path, const std::string &out_path, std::ostream &out);
int cmd_code_corpus(const CliConfig &config, const CodeCorpusArgs &args, std::ostream &out);
int cmd_indices(const CliConfig &config, const std::string &dir, const std::string &scaling,
                const std::string &out_path, std::ostream &out);
int cmd_plane(const CliConfig &config, const std::string &dir, const std::string &scaling,
              const std::string &out_path, std::ostream &out);
int cmd_screen(const std::string &path, const std::string &out_path, std::ostream &out);
int cmd_serve(const CliConfig &config, const ServeArgs &args);

} // namespace hitl::cli
