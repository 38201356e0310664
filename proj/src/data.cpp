#include "waitcast/data.hpp"

#include "waitcast/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace waitcast {

int years(Age age) noexcept { return static_cast<int>(age); }

Age parse_age(std::string_view text) {
  if (text == "3") return Age::three;
  if (text == "4") return Age::four;
  if (text == "5") return Age::five;
  throw Error(Errc::malformed_row, "age must be 3, 4 or 5, got '" + std::string(text) + "'");
}

std::string_view to_string(Category c) noexcept {
  return c == Category::problem ? "problem" : "unrelated";
}

Category parse_category(std::string_view text) {
  if (text == "problem") return Category::problem;
  if (text == "unrelated") return Category::unrelated;
  throw Error(Errc::malformed_row, "category must be problem|unrelated, got '" + std::string(text) + "'");
}

std::array<Stratum, 6> all_strata() noexcept {
  std::array<Stratum, 6> out{};
  std::size_t i = 0;
  for (auto a : kAges)
    for (auto c : kCategories) out[i++] = {a, c};
  return out;
}

std::string stratum_label(Stratum s) {
  return "age" + std::to_string(years(s.age)) + "_" + std::string(to_string(s.category));
}

UtteranceSeries::UtteranceSeries(std::string child_id, Age age, Category category, std::vector<std::uint8_t> values)
    : child_id_(std::move(child_id)), age_(age), category_(category), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(kTaskSeconds))
    throw Error(Errc::incomplete_series, "child " + child_id_ + " has " + std::to_string(values_.size()) +
                                             " seconds, expected " + std::to_string(kTaskSeconds));
  for (auto v : values_)
    if (v > 1) throw Error(Errc::malformed_row, "child " + child_id_ + " has a non-binary code");
}

int UtteranceSeries::total() const noexcept { return std::accumulate(values_.begin(), values_.end(), 0); }

BinnedSeries bin_series(const UtteranceSeries& s, int bin_width_s) {
  if (bin_width_s <= 0 || kTaskSeconds % bin_width_s != 0)
    throw Error(Errc::non_divisor_width, "bin width " + std::to_string(bin_width_s) + " does not divide 480");
  const int bins = kTaskSeconds / bin_width_s;
  BinnedSeries out{s.child_id(), s.age(), s.category(), bin_width_s, std::vector<int>(bins, 0)};
  const auto& v = s.values();
  for (int t = 0; t < kTaskSeconds; ++t) out.counts[t / bin_width_s] += v[t];
  return out;
}

Eigen::MatrixXd binned_matrix(const std::vector<BinnedSeries>& series) {
  if (series.empty()) return {};
  const auto cols = static_cast<Eigen::Index>(series.front().counts.size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(series.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& c = series[static_cast<std::size_t>(i)].counts;
    if (static_cast<Eigen::Index>(c.size()) != cols)
      throw Error(Errc::length_mismatch, "series " + series[static_cast<std::size_t>(i)].child_id +
                                             " has a different bin count");
    for (Eigen::Index t = 0; t < cols; ++t) m(i, t) = c[static_cast<std::size_t>(t)];
  }
  return m;
}

void Dataset::insert(UtteranceSeries s) {
  SeriesKey key{s.age(), s.category(), s.child_id()};
  auto [it, inserted] = series_.emplace(std::move(key), std::move(s));
  if (!inserted) throw Error(Errc::malformed_row, "duplicate series for child " + it->first.child_id);
}

const UtteranceSeries* Dataset::find(Stratum st, std::string_view child_id) const {
  auto it = series_.find(SeriesKey{st.age, st.category, std::string(child_id)});
  return it == series_.end() ? nullptr : &it->second;
}

std::vector<const UtteranceSeries*> Dataset::stratum(Stratum st) const {
  std::vector<const UtteranceSeries*> out;
  for (const auto& [key, s] : series_)
    if (key.age == st.age && key.category == st.category) out.push_back(&s);
  return out;
}

std::vector<std::string> Dataset::child_ids(Stratum st) const {
  std::vector<std::string> out;
  for (const auto* s : stratum(st)) out.push_back(s->child_id());
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int parse_int(std::string_view text, std::size_t line_no, const char* what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw Error(Errc::malformed_row, "line " + std::to_string(line_no) + ": bad " + what + " '" + std::string(text) + "'");
  return v;
}

}  // namespace

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::malformed_row, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "child_id,age,category,second,code")
    throw Error(Errc::malformed_row, "unexpected header '" + line + "'");

  struct Pending {
    std::vector<std::uint8_t> values = std::vector<std::uint8_t>(kTaskSeconds, 0);
    std::vector<bool> seen = std::vector<bool>(kTaskSeconds, false);
    int count = 0;
  };
  std::map<SeriesKey, Pending> pending;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 5) throw Error(Errc::malformed_row, "line " + std::to_string(line_no) + ": expected 5 fields");
    if (f[0].empty()) throw Error(Errc::malformed_row, "line " + std::to_string(line_no) + ": empty child_id");
    const Age age = parse_age(f[1]);
    const Category cat = parse_category(f[2]);
    const int second = parse_int(f[3], line_no, "second");
    const int code = parse_int(f[4], line_no, "code");
    if (second < 0 || second >= kTaskSeconds)
      throw Error(Errc::malformed_row, "line " + std::to_string(line_no) + ": second out of [0,480)");
    if (code != 0 && code != 1)
      throw Error(Errc::malformed_row, "line " + std::to_string(line_no) + ": code must be 0 or 1");
    auto& p = pending[SeriesKey{age, cat, std::string(f[0])}];
    const auto idx = static_cast<std::size_t>(second);
    if (p.seen[idx])
      throw Error(Errc::malformed_row, "line " + std::to_string(line_no) + ": duplicate second " + std::to_string(second));
    p.seen[idx] = true;
    p.values[idx] = static_cast<std::uint8_t>(code);
    ++p.count;
  }

  Dataset ds;
  for (auto& [key, p] : pending) {
    if (p.count != kTaskSeconds)
      throw Error(Errc::incomplete_series, "child " + key.child_id + " (" + stratum_label({key.age, key.category}) +
                                               ") has " + std::to_string(p.count) + " seconds");
    ds.insert(UtteranceSeries(key.child_id, key.age, key.category, std::move(p.values)));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  return read_dataset(in);
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  out << "child_id,age,category,second,code\n";
  for (const auto& [key, s] : ds) {
    const auto prefix = s.child_id() + ',' + std::to_string(years(s.age())) + ',' + std::string(to_string(s.category())) + ',';
    for (int t = 0; t < kTaskSeconds; ++t)
      out << prefix << t << ',' << static_cast<int>(s.values()[static_cast<std::size_t>(t)]) << '\n';
  }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  write_dataset(ds, out);
}

MinMaxScaler MinMaxScaler::fit(const Eigen::MatrixXd& m) {
  MinMaxScaler s;
  s.columns.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (m.rows() == 0) throw Error(Errc::empty_input, "normalize: column without values");
    s.columns.push_back({m.col(j).minCoeff(), m.col(j).maxCoeff()});
  }
  return s;
}

Eigen::MatrixXd MinMaxScaler::transform(const Eigen::MatrixXd& m) const {
  if (static_cast<std::size_t>(m.cols()) != columns.size())
    throw Error(Errc::dimension_mismatch, "scaler has " + std::to_string(columns.size()) + " columns");
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = columns[static_cast<std::size_t>(j)].scale(m(i, j));
  return out;
}

Eigen::MatrixXd MinMaxScaler::inverse(const Eigen::MatrixXd& m) const {
  if (static_cast<std::size_t>(m.cols()) != columns.size())
    throw Error(Errc::dimension_mismatch, "scaler has " + std::to_string(columns.size()) + " columns");
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = columns[static_cast<std::size_t>(j)].unscale(m(i, j));
  return out;
}

Normalized normalize(const Eigen::MatrixXd& columns) {
  auto scaler = MinMaxScaler::fit(columns);
  auto values = scaler.transform(columns);
  return {std::move(values), std::move(scaler)};
}

Eigen::VectorXd SupervisedFrame::denormalize_target(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = target_range.unscale(v(i));
  return out;
}

SupervisedFrame SupervisedFrame::rows(Eigen::Index begin, Eigen::Index end) const {
  SupervisedFrame out;
  out.X = X.middleRows(begin, end - begin);
  out.y = y.segment(begin, end - begin);
  out.y_classes.assign(y_classes.begin() + begin, y_classes.begin() + end);
  out.feature_names = feature_names;
  out.scaler = scaler;
  out.target_range = target_range;
  out.response_id = response_id;
  return out;
}

SplitFrame chronological_split(const SupervisedFrame& frame, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(Errc::invalid_config, "split ratio must lie in (0, 1)");
  const auto n = frame.samples();
  if (n < 4) throw Error(Errc::too_few_samples, "need at least 4 samples, have " + std::to_string(n));
  // Guard against 0.7 * 10 landing just below 7.
  auto n_train = static_cast<Eigen::Index>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  n_train = std::clamp<Eigen::Index>(n_train, 1, n - 1);
  return {frame.rows(0, n_train), frame.rows(n_train, n), ratio};
}

SupervisedFrame build_supervised(const Dataset& ds, Stratum st, const std::vector<std::string>& predictor_ids,
                                 const std::string& response_id, int bin_width_s, const Smoother& smoother) {
  if (predictor_ids.empty()) throw Error(Errc::empty_predictor_set, "no predictor children for " + response_id);
  if (std::find(predictor_ids.begin(), predictor_ids.end(), response_id) != predictor_ids.end())
    throw Error(Errc::invalid_config, "response child " + response_id + " is also a predictor");

  auto lookup = [&](const std::string& id) -> const UtteranceSeries& {
    const auto* s = ds.find(st, id);
    if (!s) throw Error(Errc::unknown_child, "child " + id + " not in " + stratum_label(st));
    return *s;
  };

  const auto response = bin_series(lookup(response_id), bin_width_s);
  const auto bins = static_cast<Eigen::Index>(response.counts.size());
  Eigen::MatrixXd raw(bins, static_cast<Eigen::Index>(predictor_ids.size()));
  for (std::size_t j = 0; j < predictor_ids.size(); ++j) {
    const auto b = bin_series(lookup(predictor_ids[j]), bin_width_s);
    for (Eigen::Index t = 0; t < bins; ++t) raw(t, static_cast<Eigen::Index>(j)) = b.counts[static_cast<std::size_t>(t)];
  }
  if (smoother) {
    raw = smoother(raw);
    if (raw.rows() != bins || raw.cols() != static_cast<Eigen::Index>(predictor_ids.size()))
      throw Error(Errc::shape_mismatch, "smoother changed the predictor matrix shape");
  }

  SupervisedFrame f;
  auto norm = normalize(raw);
  f.X = std::move(norm.values);
  f.scaler = std::move(norm.scaler);
  f.feature_names = predictor_ids;
  f.response_id = response_id;
  f.y_classes = response.counts;
  Eigen::VectorXd counts(bins);
  for (Eigen::Index t = 0; t < bins; ++t) counts(t) = response.counts[static_cast<std::size_t>(t)];
  f.target_range = {counts.minCoeff(), counts.maxCoeff()};
  f.y.resize(bins);
  for (Eigen::Index t = 0; t < bins; ++t) f.y(t) = f.target_range.scale(counts(t));
  return f;
}

}  // namespace waitcast
