#pragma once

#include "waitcast/metrics.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace waitcast {

struct TableRow {
  ModelKind model;
  std::optional<MetricTriple> average;
  std::size_t strata = 0;
};

/// Models by ascending average RMSE, ties by name; models without any
/// metrics go last.
std::vector<TableRow> ranking(const EvalReport& r);
void write_table(const EvalReport& r, std::ostream& out);

/// Six panels (age rows, category columns) of the mean actual and mean
/// predicted test-bin counts over the stratum's response children, with a
/// metrics footer.
void write_model_svg(const EvalReport& r, ModelKind m, std::ostream& out);

/// Writes <MODEL>.svg for each model and summary.txt; returns the paths.
/// Throws EmptyReport when no entry has metrics.
std::vector<std::filesystem::path> render_report(const EvalReport& r, const std::filesystem::path& dir);

}  // namespace waitcast
