#pragma once

#include "waitcast/cluster.hpp"
#include "waitcast/execution.hpp"
#include "waitcast/keyvalue.hpp"
#include "waitcast/linear.hpp"
#include "waitcast/lstm.hpp"
#include "waitcast/metrics.hpp"
#include "waitcast/synth.hpp"
#include "waitcast/trees.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace waitcast {

struct RunConfig {
  std::string input;  // CSV path; empty means a synthetic cohort
  CohortConfig cohort;
  int bin_width_s = 10;
  double response_fraction = 0.2;
  int k_max = 10;
  int ols_degree = 3;  // < 0 disables the polynomial smoothing
  bool var_half = true;
  int var_order = 1;
  double split_ratio = 0.7;
  std::uint64_t seed = 7;
  std::string out = "out";
  EnetConfig enet;
  ForestConfig forest;
  BoostConfig boost;
  LstmConfig lstm;

  RunConfig();

  void validate() const;
  /// Unknown keys are rejected. The cohort seed follows `seed`.
  static RunConfig from_keyvalue(const KeyValueFile& kv);
  static RunConfig load(const std::filesystem::path& path);
  /// Every field as sorted `key = value` lines; output directory excluded.
  std::string canonical() const;
  /// FNV-1a 64 of canonical(), 16 hex digits.
  std::string digest() const;
  std::string run_id() const { return "run-" + digest().substr(0, 12); }
};

/// Per-stratum clustering outcome, kept for the audit log.
struct StratumClustering {
  Stratum stratum;
  DistanceMatrix distances;
  Dendrogram dendrogram;
  ClusterAssignment assignment;
  PredictorResponseSplit split;
  std::vector<std::string> var_children;  // predictors smoothed by VAR on top of OLS
};

/// Distance matrix, Ward, CH-k over [2, min(k_max, n-1)] and the
/// predictor/response split for one stratum.
StratumClustering cluster_stratum(const Dataset& ds, Stratum st, const RunConfig& cfg,
                                  Execution exec = Execution::parallel);

/// OLS on every predictor column, then VAR on the chosen column subset.
Smoother make_smoother(const RunConfig& cfg, const std::vector<std::string>& predictors,
                       const std::vector<std::string>& var_children);

Dataset load_or_generate(const RunConfig& cfg, Execution exec = Execution::parallel);

struct RunResult {
  std::filesystem::path dir;
  EvalReport report;
  std::vector<std::string> failures;
};

/// Writes out/<run-id>/{config.digest, heatmaps/, models/, report.json,
/// report.csv, plots/}. Failures inside a stratum are collected; the
/// report of everything that succeeded is still written, then an Error
/// naming the failed tasks is thrown.
RunResult run_pipeline(const RunConfig& cfg, Execution exec = Execution::parallel);

/// Only heatmaps and the cluster log (cluster.txt).
std::filesystem::path run_clustering(const RunConfig& cfg, Execution exec = Execution::parallel);

}  // namespace waitcast
