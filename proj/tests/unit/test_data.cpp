#include "helpers.hpp"

#include "waitcast/data.hpp"

#include <numeric>
#include <sstream>

using namespace waitcast;
using testing::error_code_of;
using testing::series_with;

namespace {

std::string csv_for(const std::string& id, int rows, int code = 0) {
  std::string s = "child_id,age,category,second,code\n";
  for (int t = 0; t < rows; ++t) s += id + ",3,problem," + std::to_string(t) + "," + std::to_string(code) + "\n";
  return s;
}

Dataset small_dataset() {
  Rng rng(5);
  Dataset ds;
  for (int i = 0; i < 5; ++i) ds.insert(testing::random_series(rng, "k" + std::to_string(i)));
  return ds;
}

}  // namespace

TEST_CASE("utterance series enforces length and binary codes") {
  CHECK(error_code_of([] { UtteranceSeries("a", Age::three, Category::problem, std::vector<std::uint8_t>(479, 0)); }) ==
        Errc::incomplete_series);
  std::vector<std::uint8_t> bad(480, 0);
  bad[7] = 2;
  CHECK(error_code_of([&] { UtteranceSeries("a", Age::three, Category::problem, bad); }) == Errc::malformed_row);
}

TEST_CASE("loading a single all-zero child") {
  std::istringstream in(csv_for("c1", 480));
  const auto ds = read_dataset(in);
  REQUIRE(ds.size() == 1);
  const auto* s = ds.find({Age::three, Category::problem}, "c1");
  REQUIRE(s != nullptr);
  CHECK(s->total() == 0);
}

TEST_CASE("a child with 479 rows is incomplete") {
  std::istringstream in(csv_for("c1", 479));
  CHECK(error_code_of([&] { read_dataset(in); }) == Errc::incomplete_series);
}

TEST_CASE("malformed rows are rejected") {
  SUBCASE("non-binary code") {
    auto text = csv_for("c1", 480);
    text.replace(text.find("c1,3,problem,5,0"), 16, "c1,3,problem,5,2");
    std::istringstream in(text);
    CHECK(error_code_of([&] { read_dataset(in); }) == Errc::malformed_row);
  }
  SUBCASE("second out of range") {
    auto text = csv_for("c1", 480) + "c1,3,problem,480,0\n";
    std::istringstream in(text);
    CHECK(error_code_of([&] { read_dataset(in); }) == Errc::malformed_row);
  }
  SUBCASE("negative second") {
    std::istringstream in("child_id,age,category,second,code\nc1,3,problem,-1,0\n");
    CHECK(error_code_of([&] { read_dataset(in); }) == Errc::malformed_row);
  }
  SUBCASE("duplicate second") {
    std::istringstream in(csv_for("c1", 480) + "c1,3,problem,3,1\n");
    CHECK(error_code_of([&] { read_dataset(in); }) == Errc::malformed_row);
  }
  SUBCASE("wrong header") {
    std::istringstream in("id,age,category,second,code\n");
    CHECK(error_code_of([&] { read_dataset(in); }) == Errc::malformed_row);
  }
  SUBCASE("unknown age") {
    std::istringstream in("child_id,age,category,second,code\nc1,6,problem,0,0\n");
    CHECK(error_code_of([&] { read_dataset(in); }) == Errc::malformed_row);
  }
}

TEST_CASE("csv round trip is byte identical after canonical ordering") {
  Rng rng(11);
  Dataset ds;
  for (auto st : all_strata())
    for (const char* id : {"b", "a", "c"}) ds.insert(testing::random_series(rng, id, 0.2, st.age, st.category));
  std::ostringstream first;
  write_dataset(ds, first);

  // shuffle the rows before reading back
  std::istringstream lines(first.str());
  std::string header, line;
  std::getline(lines, header);
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  rng.shuffle(std::span<std::string>(rows));
  std::string shuffled = header + "\n";
  for (const auto& r : rows) shuffled += r + "\n";

  std::istringstream in(shuffled);
  const auto back = read_dataset(in);
  CHECK(back == ds);
  std::ostringstream second;
  write_dataset(back, second);
  CHECK(second.str() == first.str());
}

TEST_CASE("binning") {
  SUBCASE("speech in seconds 0-35 with one-minute bins") {
    std::vector<int> ones(36);
    std::iota(ones.begin(), ones.end(), 0);
    const auto b = bin_series(series_with("a", ones), 60);
    CHECK(b.counts == std::vector<int>{36, 0, 0, 0, 0, 0, 0, 0});
  }
  SUBCASE("all zero, width 10") {
    const auto b = bin_series(series_with("a", {}), 10);
    CHECK(b.counts == std::vector<int>(48, 0));
  }
  SUBCASE("all one, width 48") {
    std::vector<int> ones(480);
    std::iota(ones.begin(), ones.end(), 0);
    const auto b = bin_series(series_with("a", ones), 48);
    CHECK(b.counts == std::vector<int>(10, 48));
  }
  SUBCASE("width must divide 480") {
    CHECK(error_code_of([] { bin_series(series_with("a", {}), 7); }) == Errc::non_divisor_width);
    CHECK(error_code_of([] { bin_series(series_with("a", {}), 0); }) == Errc::non_divisor_width);
  }
}

TEST_CASE("binning conserves speech seconds and stays within the bin width") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = testing::random_series(rng, "x", rng.uniform());
    for (int w = 1; w <= kTaskSeconds; ++w) {
      if (kTaskSeconds % w) continue;
      const auto b = bin_series(s, w);
      CHECK(static_cast<int>(b.counts.size()) == kTaskSeconds / w);
      CHECK(std::accumulate(b.counts.begin(), b.counts.end(), 0) == s.total());
      for (int c : b.counts) CHECK((c >= 0 && c <= w));
    }
  }
}

TEST_CASE("min-max normalization") {
  Eigen::MatrixXd m(3, 2);
  m << 0, 5, 18, 5, 36, 5;
  const auto n = normalize(m);
  CHECK(n.values(0, 0) == 0.0);
  CHECK(n.values(1, 0) == 0.5);
  CHECK(n.values(2, 0) == 1.0);
  CHECK(n.values.col(1).isZero(0.0));
  CHECK(n.scaler.columns[1].constant());
}

TEST_CASE("normalization inverts and is idempotent") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = testing::random_matrix(rng, 1 + static_cast<Eigen::Index>(rng.below(30)) + 1, 4, 10.0);
    const auto n = normalize(m);
    CHECK((n.scaler.inverse(n.values) - m).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((normalize(n.values).values - n.values).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(n.values.minCoeff() >= 0.0);
    CHECK(n.values.maxCoeff() <= 1.0);
  }
}

namespace {

SupervisedFrame frame_of(Eigen::Index n) {
  SupervisedFrame f;
  f.X = Eigen::VectorXd::LinSpaced(n, 0, static_cast<double>(n - 1));
  f.y = Eigen::VectorXd::LinSpaced(n, 0, 1);
  for (Eigen::Index i = 0; i < n; ++i) f.y_classes.push_back(static_cast<int>(i));
  return f;
}

}  // namespace

TEST_CASE("chronological split sizes") {
  CHECK(chronological_split(frame_of(48), 0.7).train.samples() == 33);
  CHECK(chronological_split(frame_of(48), 0.7).test.samples() == 15);
  CHECK(chronological_split(frame_of(10), 0.5).train.samples() == 5);
  CHECK(chronological_split(frame_of(10), 0.5).test.samples() == 5);
  CHECK(chronological_split(frame_of(10), 0.7).train.samples() == 7);
  CHECK(error_code_of([] { chronological_split(frame_of(3), 0.7); }) == Errc::too_few_samples);
  CHECK(error_code_of([] { chronological_split(frame_of(10), 1.0); }) == Errc::invalid_config);
}

TEST_CASE("chronological split is an order-preserving partition") {
  for (Eigen::Index n = 4; n <= 60; ++n) {
    for (double ratio : {0.05, 0.1, 0.25, 0.5, 0.7, 0.9, 0.99}) {
      const auto f = frame_of(n);
      const auto s = chronological_split(f, ratio);
      REQUIRE(s.train.samples() + s.test.samples() == n);
      CHECK(s.train.samples() >= 1);
      CHECK(s.test.samples() >= 1);
      std::vector<int> joined = s.train.y_classes;
      joined.insert(joined.end(), s.test.y_classes.begin(), s.test.y_classes.end());
      CHECK(joined == f.y_classes);
    }
  }
}

TEST_CASE("supervised frame layout") {
  const auto ds = small_dataset();
  const Stratum st{Age::three, Category::problem};
  const auto f = build_supervised(ds, st, {"k0", "k1", "k2"}, "k4", 10);
  CHECK(f.X.rows() == 48);
  CHECK(f.X.cols() == 3);
  CHECK(f.y.size() == 48);
  CHECK(f.feature_names == std::vector<std::string>{"k0", "k1", "k2"});
  const auto target = bin_series(*ds.find(st, "k4"), 10);
  CHECK(f.y_classes == target.counts);
  for (Eigen::Index t = 0; t < 48; ++t)
    CHECK(f.denormalize_target(f.y)(t) == doctest::Approx(target.counts[static_cast<std::size_t>(t)]).epsilon(1e-12));
}

TEST_CASE("identity smoothing reproduces normalized binned predictors") {
  const auto ds = small_dataset();
  const Stratum st{Age::three, Category::problem};
  const std::vector<std::string> preds{"k3", "k0"};
  const auto f = build_supervised(ds, st, preds, "k1", 10);
  std::vector<BinnedSeries> binned;
  for (const auto& id : preds) binned.push_back(bin_series(*ds.find(st, id), 10));
  const Eigen::MatrixXd expected = normalize(binned_matrix(binned).transpose()).values;
  CHECK(f.X == expected);
  const auto again = build_supervised(ds, st, preds, "k1", 10);
  CHECK(again.X == f.X);
  CHECK(again.y == f.y);
}

TEST_CASE("all-zero response child") {
  Dataset ds = small_dataset();
  ds.insert(series_with("zero", {}));
  const auto f = build_supervised(ds, {Age::three, Category::problem}, {"k0"}, "zero", 10);
  CHECK(f.y.isZero(0.0));
  CHECK(f.y_classes == std::vector<int>(48, 0));
}

TEST_CASE("supervised frame errors") {
  const auto ds = small_dataset();
  const Stratum st{Age::three, Category::problem};
  CHECK(error_code_of([&] { build_supervised(ds, st, {}, "k1", 10); }) == Errc::empty_predictor_set);
  CHECK(error_code_of([&] { build_supervised(ds, st, {"k0", "nobody"}, "k1", 10); }) == Errc::unknown_child);
  CHECK(error_code_of([&] { build_supervised(ds, st, {"k0"}, "nobody", 10); }) == Errc::unknown_child);
  CHECK(error_code_of([&] { build_supervised(ds, {Age::four, Category::problem}, {"k0"}, "k1", 10); }) ==
        Errc::unknown_child);
}

TEST_CASE("dataset keys are unique") {
  Dataset ds;
  ds.insert(series_with("a", {}));
  CHECK(error_code_of([&] { ds.insert(series_with("a", {1})); }) == Errc::malformed_row);
  ds.insert(series_with("a", {}, Age::four));
  CHECK(ds.size() == 2);
}
