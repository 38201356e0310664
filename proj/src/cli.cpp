#include "waitcast/cli.hpp"

#include "waitcast/error.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <string_view>

namespace waitcast {

namespace {

struct Spec {
  const char* name;
  CommandKind kind;
  const char* description;
};

constexpr Spec kCommands[] = {
    {"generate", CommandKind::generate, "Write a synthetic cohort to <out>/cohort.csv"},
    {"cluster", CommandKind::cluster, "Cluster every stratum and write heatmaps"},
    {"run", CommandKind::run, "Run the full forecasting pipeline"},
    {"report", CommandKind::report, "Re-render plots and the summary table of a finished run"},
    {"selftest", CommandKind::selftest, "Run the oracle and acceptance suites"},
};

template <typename T>
T parse_flag(const std::string& flag, const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw Error(Errc::usage, "invalid value '" + text + "' for " + flag + "\n\n" + usage_text());
  return v;
}

struct Raw {
  std::string config, seed, out, run, threads;
};

void build(CLI::App& app, Raw& raw) {
  app.require_subcommand(1, 1);
  app.fallthrough(false);
  for (const auto& spec : kCommands) {
    auto* sub = app.add_subcommand(spec.name, spec.description);
    if (spec.kind == CommandKind::report) {
      sub->add_option("--run", raw.run, "Run directory holding report.json")->required();
    } else if (spec.kind != CommandKind::selftest) {
      sub->add_option("--config", raw.config, "Key = value config file");
      sub->add_option("--seed", raw.seed, "Global seed (overrides the config)");
      sub->add_option("--out", raw.out, "Output root directory");
    }
    sub->add_option("--threads", raw.threads, "OpenMP thread count");
  }
}

constexpr const char* kDescription = "Forecasting benchmark for per-second speech codes during a child wait task";

}  // namespace

std::string usage_text() {
  Raw raw;
  CLI::App app{kDescription, "waitcast"};
  build(app, raw);
  return app.help();
}

Command parse_cli(int argc, const char* const* argv) {
  if (argc <= 1) throw Error(Errc::usage, "no command given\n\n" + usage_text());
  const std::string_view first = argv[1];
  if (!first.starts_with("-") &&
      std::none_of(std::begin(kCommands), std::end(kCommands), [&](const Spec& s) { return first == s.name; }))
    throw Error(Errc::usage, "unknown command '" + std::string(first) + "'\n\n" + usage_text());
  Raw raw;
  CLI::App app{kDescription, "waitcast"};
  build(app, raw);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    Command c;
    c.kind = CommandKind::help;
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    c.text = target->help();
    return c;
  } catch (const CLI::ParseError& e) {
    throw Error(Errc::usage, std::string(e.what()) + "\n\n" + usage_text());
  }

  Command c;
  const auto* sub = app.get_subcommands().front();
  for (const auto& spec : kCommands)
    if (sub->get_name() == spec.name) c.kind = spec.kind;
  if (!raw.config.empty()) c.config = raw.config;
  const auto given = [&](const char* flag) { return sub->get_option_no_throw(flag) && sub->count(flag) > 0; };
  if (given("--seed")) c.seed = parse_flag<std::uint64_t>("--seed", raw.seed);
  if (!raw.out.empty()) c.out = raw.out;
  if (!raw.run.empty()) c.run_dir = raw.run;
  if (given("--threads")) {
    c.threads = parse_flag<int>("--threads", raw.threads);
    if (*c.threads < 1) throw Error(Errc::usage, "--threads must be >= 1\n\n" + usage_text());
  }
  return c;
}

RunConfig resolve_config(const Command& cmd) {
  KeyValueFile kv = cmd.config ? KeyValueFile::load(*cmd.config) : KeyValueFile{};
  if (cmd.seed) {
    kv.set("seed", std::to_string(*cmd.seed));
    kv.set("synth.seed", std::to_string(*cmd.seed));
  }
  if (cmd.out) kv.set("out", *cmd.out);
  return RunConfig::from_keyvalue(kv);
}

}  // namespace waitcast
