#include "acceptance.hpp"
#include "waitcast/cli.hpp"
#include "waitcast/error.hpp"
#include "waitcast/render.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace waitcast;

namespace {

int generate(const Command& cmd) {
  const auto cfg = resolve_config(cmd);
  const auto ds = generate_cohort(cfg.cohort);
  fs::create_directories(cfg.out);
  const auto path = fs::path(cfg.out) / "cohort.csv";
  save_dataset(ds, path);
  std::cout << "wrote " << ds.size() << " series to " << path.string() << "\n";
  return 0;
}

int cluster(const Command& cmd) {
  const auto dir = run_clustering(resolve_config(cmd));
  std::ifstream log(dir / "cluster.txt");
  std::string line;
  while (std::getline(log, line))
    if (line.starts_with("[") || line.starts_with("selected_k") || line.starts_with("responses"))
      std::cout << line << "\n";
  std::cout << "heatmaps in " << (dir / "heatmaps").string() << "\n";
  return 0;
}

int run(const Command& cmd) {
  const auto result = run_pipeline(resolve_config(cmd));
  write_table(result.report, std::cout);
  std::cout << "run directory " << result.dir.string() << "\n";
  return 0;
}

int report(const Command& cmd) {
  const fs::path dir = *cmd.run_dir;
  const auto r = load_report(dir / "report.json");
  for (const auto& p : render_report(r, dir / "plots")) std::cout << "wrote " << p.string() << "\n";
  write_table(r, std::cout);
  return 0;
}

int selftest() {
  const auto scratch = fs::temp_directory_path() / ("waitcast-selftest-" + std::to_string(::getpid()));
  const auto results = acceptance::run_all(scratch, std::cout);
  std::error_code ec;
  fs::remove_all(scratch, ec);
  int passed = 0;
  for (const auto& r : results) passed += r.pass;
  std::cout << passed << "/" << results.size() << " acceptance criteria passed\n";
  return passed == static_cast<int>(results.size()) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  Command cmd;
  try {
    cmd = parse_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  if (cmd.kind == CommandKind::help) {
    std::cout << cmd.text;
    return 0;
  }
  if (cmd.threads) set_threads(*cmd.threads);

  try {
    switch (cmd.kind) {
      case CommandKind::generate: return generate(cmd);
      case CommandKind::cluster: return cluster(cmd);
      case CommandKind::run: return run(cmd);
      case CommandKind::report: return report(cmd);
      case CommandKind::selftest: return selftest();
      case CommandKind::help: break;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
