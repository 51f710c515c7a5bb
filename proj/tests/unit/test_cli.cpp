#include <doctest.h>

#include "support.hpp"

#include "cli_config.hpp"

#include <hitl/text_util.hpp>

#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>

using namespace hitl;
using hitl::test::data_dir;
using hitl::test::errc_of;

namespace {

struct EnvGuard {
  std::vector<std::string> names;
  void set(const std::string &name, const std::string &value) {
    names.push_back(name);
    ::setenv(name.c_str(), value.c_str(), 1);
  }
  ~EnvGuard() {
    for (const auto &n : names)
      ::unsetenv(n.c_str());
  }
};

struct Output {
  int status = -1;
  std::string out;
};

Output hitl_cli(const std::string &args) {
  std::string cmd = std::string(HITL_CLI_PATH) + " " + args + " 2>/dev/null";
  Output o;
  FILE *pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0)
    o.out.append(buf, n);
  int raw = ::pclose(pipe);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

} // namespace

TEST_CASE("flags beat environment beats config file") {
  test::TempDir dir;
  text::write_file(dir / "cfg.yaml",
                   "provider: deepseek\nparallelism: 2\nparams:\n  model: from-file\n  temperature: 0.5\n");
  EnvGuard env;
  env.set("HITL_MODEL", "from-env");
  cli::CliOverrides flags;
  flags.config_file = (dir / "cfg.yaml").string();
  auto c = cli::resolve_config(flags);
  CHECK(c.params.model == "from-env");
  CHECK(c.params.temperature == 0.5);
  CHECK(c.gateway.max_in_flight == 2);
  CHECK(c.gateway.provider == "deepseek");
  CHECK(c.sources.at("params.model") == "env:HITL_MODEL");

  flags.model = "from-flag";
  c = cli::resolve_config(flags);
  CHECK(c.params.model == "from-flag");
  CHECK(c.sources.at("params.model") == "flag");
}

TEST_CASE("cassette settings") {
  cli::CliOverrides flags;
  flags.cassette = "x.jsonl";
  auto c = cli::resolve_config(flags);
  CHECK(c.mode == CassetteMode::replay);
  CHECK(c.gateway.api_key_env.empty());
  flags.cassette.reset();
  flags.mode = "replay";
  CHECK(errc_of([&] { cli::resolve_config(flags); }) == Errc::config_error);
  flags.mode = "sideways";
  CHECK(errc_of([&] { cli::resolve_config(flags); }) == Errc::config_error);
  flags.mode.reset();
  flags.parallelism = 0;
  CHECK(errc_of([&] { cli::resolve_config(flags); }) == Errc::config_error);
}

TEST_CASE("cli: exp1 replay prints the grid table") {
  auto o = hitl_cli("--cassette " + (data_dir() / "cassettes/exp1.jsonl").string() +
                    " --audit-dir " + (std::filesystem::temp_directory_path() / "hitl-cli-test").string() +
                    " exp1");
  CHECK(o.status == 0);
  CHECK(o.out.find("1-10/yes,0.16,1.13,49") != std::string::npos);
  CHECK(o.out.find("0-10/yes,0.00,0.00,50") != std::string::npos);
}

TEST_CASE("cli: exit codes") {
  CHECK(hitl_cli("validate " + (data_dir() / "pipelines/multi-stage.yaml").string()).status == 0);
  CHECK(hitl_cli("--no-such-flag").status == 1);
  CHECK(hitl_cli("screen " + (data_dir() / "fixtures/screening-bad.json").string()).status == 2);
  CHECK(hitl_cli("validate /nonexistent.yaml").status == 5);
  auto screen = hitl_cli("screen " + (data_dir() / "fixtures/screening.json").string());
  CHECK(screen.status == 0);
  CHECK(screen.out == "S01\nS05\nS10\nS11\nS14\nS17\nS19\n");
  auto conc = hitl_cli("concordance " + (data_dir() / "fixtures/table3.csv").string());
  CHECK(conc.out.find("amendment,2,0,2") != std::string::npos);
}
