#pragma once

#include "waitcast/data.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace waitcast {

double rmse(std::span<const double> pred, std::span<const double> actual);
double mae(std::span<const double> pred, std::span<const double> actual);
/// mean(pred - actual): negative means under-prediction on average.
double mbe(std::span<const double> pred, std::span<const double> actual);

struct MetricTriple {
  double rmse = 0.0;
  double mae = 0.0;
  double mbe = 0.0;
  bool operator==(const MetricTriple&) const = default;
};

MetricTriple metric_triple(std::span<const double> pred, std::span<const double> actual);

enum class ModelKind { enr, rf, xgb, lstm };
inline constexpr std::array<ModelKind, 4> kModels{ModelKind::enr, ModelKind::rf, ModelKind::xgb, ModelKind::lstm};
std::string_view to_string(ModelKind m) noexcept;
ModelKind parse_model_kind(std::string_view text);

/// Test-slice forecast of one model for one response child, at count scale.
struct ChildForecast {
  ModelKind model;
  Stratum stratum;
  std::string child_id;
  std::vector<double> actual;
  std::vector<double> predicted;
};

struct ChildResult {
  std::string child_id;
  std::vector<double> actual;
  std::vector<double> predicted;
  MetricTriple metrics;
};

struct StratumEntry {
  std::optional<MetricTriple> metrics;  // absent when the stratum produced no forecasts
  std::vector<ChildResult> children;
  std::string note;
};

struct EvalReport {
  std::map<ModelKind, std::map<Stratum, StratumEntry>> entries;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::map<Stratum, int> selected_k;

  /// Number of (model, stratum) cells with metrics.
  std::size_t present() const;
  bool complete() const { return present() == kModels.size() * 6; }
  /// Mean over the strata that have metrics; empty when none do.
  std::optional<MetricTriple> model_average(ModelKind m) const;
  const StratumEntry* find(ModelKind m, Stratum st) const;

  bool operator==(const EvalReport&) const;
};

/// Groups forecasts by (model, stratum); each stratum entry is the mean of
/// its children's metrics. Cells without forecasts are kept and marked
/// absent with a MissingStratum note.
EvalReport evaluate_all(const std::vector<ChildForecast>& forecasts, std::uint64_t seed = 0,
                        std::string config_digest = "");

std::string report_json(const EvalReport& r);
EvalReport parse_report_json(std::string_view text);
EvalReport load_report(const std::filesystem::path& path);
void write_report_csv(const EvalReport& r, std::ostream& out);

}  // namespace waitcast
