#pragma once

#include <Eigen/Dense>

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace waitcast {

/// Length of the coded wait task: 8 minutes at one code per second.
inline constexpr int kTaskSeconds = 480;

enum class Age : int { three = 3, four = 4, five = 5 };
enum class Category : int { problem = 0, unrelated = 1 };

inline constexpr std::array<Age, 3> kAges{Age::three, Age::four, Age::five};
inline constexpr std::array<Category, 2> kCategories{Category::problem, Category::unrelated};

int years(Age age) noexcept;
Age parse_age(std::string_view text);
std::string_view to_string(Category c) noexcept;
Category parse_category(std::string_view text);

/// One (age, speech category) cell of the study design.
struct Stratum {
  Age age;
  Category category;
  auto operator<=>(const Stratum&) const = default;
};

/// The six strata in canonical order (age-major).
std::array<Stratum, 6> all_strata() noexcept;
std::string stratum_label(Stratum s);

/// One child's per-second binary coding for one age and category.
/// The constructor enforces exactly 480 codes, each 0 or 1.
class UtteranceSeries {
 public:
  UtteranceSeries(std::string child_id, Age age, Category category, std::vector<std::uint8_t> values);

  const std::string& child_id() const noexcept { return child_id_; }
  Age age() const noexcept { return age_; }
  Category category() const noexcept { return category_; }
  Stratum stratum() const noexcept { return {age_, category_}; }
  const std::vector<std::uint8_t>& values() const noexcept { return values_; }
  int total() const noexcept;

  bool operator==(const UtteranceSeries&) const = default;

 private:
  std::string child_id_;
  Age age_;
  Category category_;
  std::vector<std::uint8_t> values_;
};

/// Seconds of speech per fixed-width bin.
struct BinnedSeries {
  std::string child_id;
  Age age;
  Category category;
  int bin_width_s;
  std::vector<int> counts;
};

BinnedSeries bin_series(const UtteranceSeries& s, int bin_width_s);

/// Rows are series, columns are bins.
Eigen::MatrixXd binned_matrix(const std::vector<BinnedSeries>& series);

struct SeriesKey {
  Age age;
  Category category;
  std::string child_id;
  auto operator<=>(const SeriesKey&) const = default;
};

/// Collection of series keyed by (age, category, child_id). Iteration
/// order is the canonical order used for serialization.
class Dataset {
 public:
  void insert(UtteranceSeries s);
  const UtteranceSeries* find(Stratum st, std::string_view child_id) const;
  /// Series in one stratum, ordered by child id.
  std::vector<const UtteranceSeries*> stratum(Stratum st) const;
  std::vector<std::string> child_ids(Stratum st) const;

  std::size_t size() const noexcept { return series_.size(); }
  auto begin() const { return series_.begin(); }
  auto end() const { return series_.end(); }

  bool operator==(const Dataset&) const = default;

 private:
  std::map<SeriesKey, UtteranceSeries> series_;
};

/// CSV long format: header `child_id,age,category,second,code`.
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& ds, std::ostream& out);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

struct ColumnRange {
  double min = 0.0;
  double max = 0.0;
  bool constant() const noexcept { return !(max > min); }
  double scale(double x) const noexcept { return constant() ? 0.0 : (x - min) / (max - min); }
  double unscale(double v) const noexcept { return constant() ? min : min + v * (max - min); }
};

/// Per-column min-max scaling to [0, 1]; constant columns map to 0.
struct MinMaxScaler {
  std::vector<ColumnRange> columns;

  static MinMaxScaler fit(const Eigen::MatrixXd& m);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& m) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& m) const;
};

struct Normalized {
  Eigen::MatrixXd values;
  MinMaxScaler scaler;
};

Normalized normalize(const Eigen::MatrixXd& columns);

struct SupervisedFrame {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<int> y_classes;
  std::vector<std::string> feature_names;
  MinMaxScaler scaler;
  ColumnRange target_range;
  std::string response_id;

  Eigen::Index samples() const noexcept { return X.rows(); }
  /// Maps normalized target-scale values back to counts.
  Eigen::VectorXd denormalize_target(const Eigen::VectorXd& v) const;
  /// Rows [begin, end) with the scaling records carried over.
  SupervisedFrame rows(Eigen::Index begin, Eigen::Index end) const;
};

struct SplitFrame {
  SupervisedFrame train;
  SupervisedFrame test;
  double ratio;
};

/// First floor(ratio * n) samples train, the rest test. Needs n >= 4.
SplitFrame chronological_split(const SupervisedFrame& frame, double ratio);

/// Transforms the bins x predictors count matrix before normalization.
using Smoother = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// Per-time-bin cross-child regression frame: row t holds the (smoothed,
/// normalized) bin-t counts of every predictor child; the target is the
/// response child's bin-t count.
SupervisedFrame build_supervised(const Dataset& ds, Stratum st, const std::vector<std::string>& predictor_ids,
                                 const std::string& response_id, int bin_width_s, const Smoother& smoother = {});

}  // namespace waitcast
