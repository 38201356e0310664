#include "helpers.hpp"

#include "waitcast/cli.hpp"

#include <cstdio>
#include <fstream>
#include <sys/wait.h>

using namespace waitcast;
using testing::error_code_of;
namespace fs = std::filesystem;

namespace {

Command parse(std::vector<const char*> args) {
  args.insert(args.begin(), "waitcast");
  return parse_cli(static_cast<int>(args.size()), args.data());
}

std::string usage_message(std::vector<const char*> args) {
  try {
    parse(std::move(args));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::usage);
    return e.what();
  }
  FAIL("expected a usage error");
  return {};
}

struct Process {
  int status;
  std::string output;
};

/// Runs the CLI binary with stderr folded into stdout.
Process run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + WAITCAST_CLI_PATH + "' " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (auto n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int raw = ::pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

}  // namespace

TEST_CASE("run with overrides") {
  const auto c = parse({"run", "--config", "c.txt", "--seed", "7"});
  CHECK(c.kind == CommandKind::run);
  CHECK(c.config == "c.txt");
  CHECK(c.seed == 7u);
  CHECK(!c.out);
  CHECK(!c.threads);
}

TEST_CASE("every subcommand parses") {
  CHECK(parse({"generate", "--out", "o"}).kind == CommandKind::generate);
  CHECK(parse({"generate", "--out", "o"}).out == "o");
  CHECK(parse({"cluster"}).kind == CommandKind::cluster);
  CHECK(parse({"report", "--run", "out/run-1"}).run_dir == "out/run-1");
  CHECK(parse({"selftest", "--threads", "2"}).threads == 2);
  CHECK(parse({"--help"}).kind == CommandKind::help);
  CHECK(parse({"run", "--help"}).text.find("--seed") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(error_code_of([] { parse_cli(1, std::vector<const char*>{"waitcast"}.data()); }) == Errc::usage);
  CHECK(usage_message({}).find("generate") != std::string::npos);
  CHECK(usage_message({"run", "--seed", "abc"}).find("--seed") != std::string::npos);
  CHECK(usage_message({"run", "--seed", "-3"}).find("--seed") != std::string::npos);
  CHECK(usage_message({"run", "--colour", "red"}).find("colour") != std::string::npos);
  CHECK(usage_message({"fly"}).find("fly") != std::string::npos);
  CHECK(usage_message({"report"}).find("--run") != std::string::npos);
  CHECK(usage_message({"selftest", "--seed", "1"}).find("--seed") != std::string::npos);
  CHECK(usage_message({"run", "--threads", "0"}).find("--threads") != std::string::npos);
  CHECK(usage_message({"run", "cluster"}).size() > 0);
}

TEST_CASE("resolve_config applies overrides") {
  testing::TempDir dir("cli-config");
  const auto path = dir.path / "c.txt";
  std::ofstream(path) << "seed = 1\nrf.n_trees = 3\nout = elsewhere\n";
  Command c;
  c.kind = CommandKind::run;
  c.config = path.string();
  c.seed = 42;
  c.out = "here";
  const auto cfg = resolve_config(c);
  CHECK(cfg.seed == 42);
  CHECK(cfg.cohort.seed == 42);
  CHECK(cfg.forest.n_trees == 3);
  CHECK(cfg.out == "here");
  Command defaults;
  CHECK(resolve_config(defaults).seed == 7);
  Command missing;
  missing.config = (dir.path / "absent.txt").string();
  CHECK(error_code_of([&] { resolve_config(missing); }) == Errc::io_error);
}

TEST_CASE("binary exit codes") {
  SUBCASE("no arguments") {
    const auto p = run_cli("");
    CHECK(p.status == 2);
    CHECK(p.output.find("generate") != std::string::npos);
  }
  SUBCASE("bad seed") {
    const auto p = run_cli("run --seed abc");
    CHECK(p.status == 2);
    CHECK(p.output.find("--seed") != std::string::npos);
  }
  SUBCASE("help") {
    CHECK(run_cli("--help").status == 0);
  }
  SUBCASE("missing run directory is a runtime failure") {
    const auto p = run_cli("report --run /nonexistent/waitcast-run");
    CHECK(p.status == 1);
  }
  SUBCASE("generate writes a cohort") {
    testing::TempDir dir("cli-generate");
    const auto cfg = dir.path / "c.txt";
    std::ofstream(cfg) << "synth.n_children = 4\n";
    const auto p = run_cli("generate --config '" + cfg.string() + "' --seed 5 --out '" + dir.path.string() + "'");
    CHECK(p.status == 0);
    const auto ds = load_dataset(dir.path / "cohort.csv");
    CHECK(ds.size() == 24);
  }
  SUBCASE("bad config value is a runtime failure") {
    testing::TempDir dir("cli-badconfig");
    const auto cfg = dir.path / "c.txt";
    std::ofstream(cfg) << "bin_width_s = 7\n";
    const auto p = run_cli("cluster --config '" + cfg.string() + "' --out '" + dir.path.string() + "'");
    CHECK(p.status == 1);
    CHECK(p.output.find("bin_width_s") != std::string::npos);
  }
}
