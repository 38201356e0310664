#pragma once

#include "waitcast/pipeline.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace waitcast {

enum class CommandKind { generate, cluster, run, report, selftest, help };

struct Command {
  CommandKind kind = CommandKind::help;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> run_dir;
  std::optional<int> threads;
  std::string text;  // help output for CommandKind::help
};

std::string usage_text();

/// Throws Error(Errc::usage) with the usage text appended for empty
/// argument lists, unknown subcommands or flags, and malformed values.
Command parse_cli(int argc, const char* const* argv);

/// Config file (or defaults) with --seed and --out applied.
RunConfig resolve_config(const Command& cmd);

}  // namespace waitcast
