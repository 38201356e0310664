#include "acceptance.hpp"

#include "oracles.hpp"
#include "waitcast/cluster.hpp"
#include "waitcast/execution.hpp"
#include "waitcast/linear.hpp"
#include "waitcast/lstm.hpp"
#include "waitcast/metrics.hpp"
#include "waitcast/pipeline.hpp"
#include "waitcast/synth.hpp"
#include "waitcast/trees.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

namespace waitcast::acceptance {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Notes {
  bool ok = true;
  std::string text;

  void fail(const std::string& what) {
    ok = false;
    if (!text.empty()) text += "; ";
    text += what;
  }
  void info(const std::string& what) {
    if (!text.empty()) text += "; ";
    text += what;
  }
};

std::string g(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Outcome timed(int id, std::string name, double budget_s, const std::function<void(Notes&)>& body) {
  Outcome o{id, std::move(name), false, 0.0, budget_s, {}};
  Notes notes;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(notes);
  } catch (const std::exception& e) {
    notes.fail(std::string("exception: ") + e.what());
  }
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0.0 && o.seconds >= budget_s) notes.fail("runtime " + g(o.seconds) + " s over budget");
  o.pass = notes.ok;
  o.detail = notes.text;
  return o;
}

MatrixXd random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Outcome ward_oracle() {
  return timed(1, "Ward merges match exhaustive recompute; both merge-cost forms agree", 10.0, [](Notes& n) {
    auto rng = Rng::substream(2024, {1});
    double worst = 0.0, worst_forms = 0.0;
    int mismatched = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const Index pts = 2 + static_cast<Index>(rng.below(7));
      const Index dims = 1 + static_cast<Index>(rng.below(5));
      const MatrixXd data = random_matrix(rng, pts, dims, 3.0);
      std::vector<std::string> ids;
      for (Index i = 0; i < pts; ++i) ids.push_back("p" + std::to_string(i));
      const auto dg = ward_agglomerate(distance_matrix(data, ids, Execution::serial), data);
      const auto brute = oracle::brute_force_ward(data);
      for (std::size_t s = 0; s < brute.size(); ++s) {
        const auto& m = dg.merges[s];
        if (m.a != brute[s].a || m.b != brute[s].b) ++mismatched;
        worst = std::max(worst, std::abs(m.cost - brute[s].cost));
      }
      // the two forms on random disjoint clusters
      std::vector<int> a, b;
      for (Index i = 0; i < pts; ++i) (rng.bernoulli(0.5) ? a : b).push_back(static_cast<int>(i));
      if (!a.empty() && !b.empty())
        worst_forms = std::max(worst_forms, std::abs(oracle::ward_delta_centroid(data, a, b) -
                                                     oracle::ward_delta_sums(data, a, b)));
    }
    if (mismatched) n.fail(std::to_string(mismatched) + " merge pairs differ");
    if (worst > 1e-9) n.fail("max cost error " + g(worst));
    if (worst_forms > 1e-9) n.fail("forms differ by " + g(worst_forms));
    n.info("max cost error " + g(worst) + ", form gap " + g(worst_forms));
  });
}

Outcome ch_selection() {
  return timed(2, "CH selects k=3 on three separated blobs in >= 99/100 seeds", 30.0, [](Notes& n) {
    constexpr Index dims = kTaskSeconds / 10;
    int hits = 0;
    for (int seed = 0; seed < 100; ++seed) {
      auto rng = Rng::substream(static_cast<std::uint64_t>(seed), {2});
      MatrixXd data(30, dims);
      std::vector<std::string> ids;
      for (Index i = 0; i < 30; ++i) {
        const double centre = 10.0 * static_cast<double>(i / 10);
        for (Index t = 0; t < dims; ++t) data(i, t) = centre + 0.1 * rng.normal();
        ids.push_back("b" + std::to_string(i));
      }
      const auto dg = ward_agglomerate(distance_matrix(data, ids, Execution::serial), data);
      if (select_k_ch(dg, data, 2, 10).k == 3) ++hits;
    }
    n.info(std::to_string(hits) + "/100 seeds chose k=3");
    if (hits < 99) n.fail("needed 99");
  });
}

Outcome enet_closed_forms() {
  return timed(3, "Elastic net matches OLS, ridge and soft-threshold closed forms; objective monotone", 0.0,
               [](Notes& n) {
                 auto rng = Rng::substream(2024, {3});
                 double err_ols = 0.0, err_ridge = 0.0, err_lasso = 0.0;
                 for (int trial = 0; trial < 5; ++trial) {
                   const MatrixXd X = random_matrix(rng, 40, 4);
                   VectorXd y = X * VectorXd::LinSpaced(4, -1.0, 2.0);
                   for (Index i = 0; i < y.size(); ++i) y(i) += 0.3 * rng.normal() + 5.0;
                   EnetConfig cfg;
                   cfg.lambda = 0.0;
                   cfg.tol = 1e-12;
                   cfg.max_iter = 100000;
                   const auto m = enet_fit(X, y, cfg);
                   const VectorXd ref = oracle::ols_with_intercept(X, y);
                   err_ols = std::max(err_ols, std::abs(m.intercept - ref(0)));
                   err_ols = std::max(err_ols, (m.coefficients - ref.tail(4)).cwiseAbs().maxCoeff());

                   cfg.alpha = 0.0;
                   cfg.lambda = 0.7;
                   const auto r = enet_fit(X, y, cfg);
                   err_ridge = std::max(err_ridge, (r.standardized_coefficients -
                                                    oracle::ridge_closed_form(X, y, cfg.l2())).cwiseAbs().maxCoeff());
                 }
                 // orthonormal after standardization and the 1/sqrt(n) scaling
                 MatrixXd X(4, 2);
                 X << 1, 1, -1, 1, 1, -1, -1, -1;
                 const VectorXd y = (2.0 * X.col(0) + 4.0 * X.col(1)).array() + 1.0;
                 EnetConfig ridge;
                 ridge.alpha = 0.0;
                 ridge.lambda = 1.0;
                 ridge.tol = 1e-14;
                 const auto rm = enet_fit(X, y, ridge);
                 err_ridge = std::max(err_ridge, (rm.coefficients - Eigen::Vector2d(1.0, 2.0)).cwiseAbs().maxCoeff());
                 EnetConfig lasso;
                 lasso.alpha = 1.0;
                 lasso.lambda = 0.5;
                 lasso.tol = 1e-14;
                 const auto lm = enet_fit(X, y, lasso);
                 err_lasso = (lm.coefficients - Eigen::Vector2d(oracle::soft(2.0, 0.5), oracle::soft(4.0, 0.5)))
                                 .cwiseAbs()
                                 .maxCoeff();

                 int rises = 0;
                 for (int trial = 0; trial < 20; ++trial) {
                   const MatrixXd Xr = random_matrix(rng, 30, 6);
                   const VectorXd yr = random_matrix(rng, 30, 1);
                   EnetConfig cfg;
                   cfg.alpha = rng.uniform();
                   cfg.lambda = rng.uniform(0.01, 1.0);
                   cfg.tol = 1e-12;
                   const auto m = enet_fit(Xr, yr, cfg);
                   for (std::size_t s = 1; s < m.objective_trace.size(); ++s)
                     if (m.objective_trace[s] > m.objective_trace[s - 1] + 1e-15) ++rises;
                 }
                 n.info("OLS " + g(err_ols) + ", ridge " + g(err_ridge) + ", lasso " + g(err_lasso) + ", rises " +
                        std::to_string(rises));
                 if (err_ols > 1e-6) n.fail("OLS limit");
                 if (err_ridge > 1e-6) n.fail("ridge closed form");
                 if (err_lasso > 1e-6) n.fail("soft-threshold closed form");
                 if (rises) n.fail("objective increased");
               });
}

Outcome boosting() {
  return timed(4, "Boosting leaf weight, split gain, monotone objective, depth-0 mean", 0.0, [](Notes& n) {
    const double w = leaf_weight(-6.0, 2.0, 1.0);
    const double gain = split_gain(-6.0, 2.0, 6.0, 2.0, 1.0, 0.0);
    if (std::abs(w - 2.0) > 1e-12) n.fail("w* = " + g(w));
    if (std::abs(gain - 12.0) > 1e-12) n.fail("gain = " + g(gain));

    auto rng = Rng::substream(2024, {4});
    int rises = 0;
    for (int trial = 0; trial < 10; ++trial) {
      const MatrixXd X = random_matrix(rng, 60, 3);
      VectorXd y(60);
      for (Index i = 0; i < 60; ++i) y(i) = std::sin(2.0 * X(i, 0)) + X(i, 1) * X(i, 2) + 0.1 * rng.normal();
      BoostConfig cfg;
      cfg.loss = BoostLoss::squared;
      cfg.subsample = 1.0;
      cfg.seed = static_cast<std::uint64_t>(trial);
      const auto m = xgb_fit(X, y, cfg, Execution::serial);
      for (std::size_t r = 1; r < m.objective_trace.size(); ++r)
        if (m.objective_trace[r] > m.objective_trace[r - 1] + 1e-12) ++rises;
    }
    if (rises) n.fail(std::to_string(rises) + " objective increases");

    MatrixXd X(2, 1);
    X << 0.0, 1.0;
    const VectorXd y = Eigen::Vector2d(2.0, 4.0);
    BoostConfig one;
    one.loss = BoostLoss::squared;
    one.n_rounds = 1;
    one.max_depth = 0;
    one.learning_rate = 1.0;
    one.lambda = 0.0;
    one.subsample = 1.0;
    one.base_score = 0.0;
    const auto pred = xgb_predict(xgb_fit(X, y, one, Execution::serial), X).values;
    const double err = (pred.array() - 3.0).abs().maxCoeff();
    if (err > 1e-9) n.fail("depth-0 prediction off by " + g(err));
    n.info("w*=" + g(w) + ", gain=" + g(gain) + ", objective rises " + std::to_string(rises) + ", mean error " + g(err));
  });
}

namespace {

void xor_points(Rng& rng, int per_cluster, MatrixXd& X, std::vector<int>& y) {
  X.resize(4 * per_cluster, 2);
  y.clear();
  const double cx[] = {-1, 1, -1, 1}, cy[] = {-1, 1, 1, -1};
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < per_cluster; ++i) {
      const Index row = c * per_cluster + i;
      X(row, 0) = cx[c] + 0.2 * rng.normal();
      X(row, 1) = cy[c] + 0.2 * rng.normal();
      y.push_back(c < 2 ? 0 : 1);
    }
}

}  // namespace

Outcome random_forest() {
  return timed(5, "Random forest XOR holdout accuracy >= 0.95; identical across 1/2/8 threads", 0.0, [](Notes& n) {
    auto rng = Rng::substream(2024, {5});
    MatrixXd Xtr, Xte;
    std::vector<int> ytr, yte;
    xor_points(rng, 50, Xtr, ytr);
    xor_points(rng, 50, Xte, yte);
    ForestConfig cfg;
    cfg.seed = 11;
    const auto forest = rf_fit(Xtr, ytr, cfg);
    const auto pred = rf_predict(forest, Xte);
    int correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == yte[i];
    const double acc = correct / static_cast<double>(pred.size());
    if (acc < 0.95) n.fail("accuracy " + g(acc));

    bool identical = true;
    for (int threads : {1, 2, 8}) {
      ThreadCountScope scope(threads);
      identical = identical && rf_fit(Xtr, ytr, cfg, Execution::parallel) == forest;
    }
    identical = identical && rf_fit(Xtr, ytr, cfg, Execution::serial) == forest;
    if (!identical) n.fail("forests differ across thread counts");
    n.info("holdout accuracy " + g(acc) + (identical ? ", bit-identical" : ""));
  });
}

namespace {

std::vector<SequenceSample> constant_windows(int window, double level) {
  auto rng = Rng::substream(2024, {6, 1});
  const Index bins = 33;
  const MatrixXd X = (random_matrix(rng, bins, 3).array() * 0.2 + 0.5).matrix();
  const VectorXd y = VectorXd::Constant(bins, level);
  return make_windows(X, y, window, window, bins);
}

std::vector<SequenceSample> random_windows(Rng& rng, int count, int window, int features) {
  std::vector<SequenceSample> out;
  for (int i = 0; i < count; ++i) out.push_back({random_matrix(rng, window, features, 0.5), rng.normal()});
  return out;
}

}  // namespace

Outcome lstm() {
  return timed(6, "LSTM scalar cell, 4-layer gradient audit, constant-series fit", 60.0, [](Notes& n) {
    LstmLayer L;
    L.Wf = L.Wi = L.Wc = L.Wo = Eigen::MatrixXd::Ones(1, 2);
    L.bf = L.bi = L.bc = L.bo = Eigen::VectorXd::Zero(1);
    const auto s = lstm_cell_forward(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), L);
    const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
    const double hand = sig1 * std::tanh(sig1 * std::tanh(1.0));
    const double cell_err = std::abs(s.h(0) - hand);
    if (cell_err > 1e-5) n.fail("h = " + g(s.h(0)) + ", hand evaluation " + g(hand));
    if (std::abs(s.f(0) - 0.73106) > 1e-5 || std::abs(s.g(0) - 0.76159) > 1e-5 || std::abs(s.c(0) - 0.55677) > 1e-5)
      n.fail("gate values f " + g(s.f(0)) + ", g " + g(s.g(0)) + ", c " + g(s.c(0)));

    LstmConfig cfg;
    cfg.hidden_size = 8;
    cfg.layers = 4;
    cfg.window = 4;
    cfg.dropout_rate = 0.0;
    cfg.seed = 3;
    cfg.init_scale = 0.5;
    auto rng = Rng::substream(2024, {6});
    const auto samples = random_windows(rng, 6, cfg.window, 3);
    const auto params = init_params(cfg, 3);
    const auto check = gradient_check(params, samples, cfg, 1e-5, 200, 7);
    if (check.checked < 200) n.fail("only " + std::to_string(check.checked) + " parameters checked");
    if (check.max_relative_error >= 1e-4) n.fail("gradient error " + g(check.max_relative_error));

    LstmConfig fit;
    fit.dropout_rate = 0.0;
    fit.learning_rate = 1e-2;
    fit.seed = 5;
    const auto trained = lstm_train(constant_windows(fit.window, 0.5), fit);
    const double best = *std::min_element(trained.loss_curve.begin(), trained.loss_curve.end());
    if (!(best < 1e-4)) n.fail("constant-series loss " + g(best));
    n.info("h " + g(s.h(0), 6) + " vs hand " + g(hand, 6) + " (0.36904 is off by " + g(std::abs(hand - 0.36904)) +
           "), grad rel err " + g(check.max_relative_error) + " over " + std::to_string(check.checked) +
           ", constant loss " + g(best) + " in " + std::to_string(trained.loss_curve.size()) + " epochs");
  });
}

Outcome metrics() {
  return timed(7, "Metrics ordering rmse >= mae >= |mbe| and hand cases", 0.0, [](Notes& n) {
    auto rng = Rng::substream(2024, {7});
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t len = 1 + rng.below(50);
      std::vector<double> p(len), a(len);
      for (std::size_t i = 0; i < len; ++i) {
        p[i] = rng.normal() * 5.0;
        a[i] = rng.normal() * 5.0 + rng.uniform(-2.0, 2.0);
      }
      const auto m = metric_triple(p, a);
      if (!(m.rmse >= m.mae && m.mae >= std::abs(m.mbe))) ++violations;
    }
    if (violations) n.fail(std::to_string(violations) + " orderings violated");
    const std::vector<double> p{1, 2}, a{2, 4};
    const double e1 = std::abs(rmse(p, a) - std::sqrt(2.5));
    const double e2 = std::abs(mae(p, a) - 1.5);
    const double e3 = std::abs(mbe(p, a) + 1.5);
    if (std::max({e1, e2, e3}) > 1e-12) n.fail("hand cases off by " + g(std::max({e1, e2, e3})));
    n.info("0/1000 violations required, got " + std::to_string(violations));
  });
}

Outcome end_to_end(const fs::path& scratch) {
  return timed(8, "End-to-end default cohort: complete, byte-identical, bimodal age-5 mass", 0.0, [&](Notes& n) {
    RunConfig cfg;
    cfg.out = (scratch / "a").string();
    const auto t0 = std::chrono::steady_clock::now();
    const auto first = run_pipeline(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 300.0) n.fail("first run took " + g(secs) + " s");
    if (!first.report.complete()) n.fail("report has " + std::to_string(first.report.present()) + "/24 entries");
    const auto bytes = read_file(first.dir / "report.json");

    cfg.out = (scratch / "b").string();
    const bool again = read_file(run_pipeline(cfg).dir / "report.json") == bytes;
    if (!again) n.fail("second run differs");

    bool threads_same = true;
    for (int threads : {1, 3}) {
      ThreadCountScope scope(threads);
      cfg.out = (scratch / ("t" + std::to_string(threads))).string();
      threads_same = threads_same && read_file(run_pipeline(cfg).dir / "report.json") == bytes;
    }
    if (!threads_same) n.fail("report differs across thread counts");

    const auto profile = CohortConfig::default_profiles().at({Age::five, Category::problem});
    double edges = 0.0, middle = 0.0;
    for (int child = 0; child < 200; ++child) {
      auto rng = Rng::substream(7, {8, static_cast<std::uint64_t>(child)});
      const auto s = generate_child(profile, rng);
      for (int t = 0; t < kTaskSeconds; ++t) {
        const double v = s.values()[static_cast<std::size_t>(t)];
        if (t < 60 || t >= 420) edges += v;
        if (t >= 180 && t < 300) middle += v;
      }
    }
    const double ratio = edges / middle;
    if (!(ratio >= 1.5)) n.fail("edge/middle mass ratio " + g(ratio));
    n.info("first run " + g(secs) + " s, " + std::to_string(first.report.present()) + " entries, repeat " +
           (again ? "identical" : "differs") + ", threads " + (threads_same ? "identical" : "differ") +
           ", edge/middle " + g(ratio));
  });
}

std::string format(const Outcome& o) {
  char head[96];
  std::snprintf(head, sizeof head, "[%s] %d. ", o.pass ? "PASS" : "FAIL", o.id);
  char tail[64];
  if (o.budget_s > 0.0)
    std::snprintf(tail, sizeof tail, " (%.2f s, limit %.0f s)", o.seconds, o.budget_s);
  else
    std::snprintf(tail, sizeof tail, " (%.2f s)", o.seconds);
  return std::string(head) + o.name + tail + (o.detail.empty() ? "" : ": " + o.detail);
}

std::vector<Outcome> run_all(const fs::path& scratch, std::ostream& out) {
  std::vector<std::function<Outcome()>> criteria{ward_oracle, ch_selection, enet_closed_forms, boosting,
                                                 random_forest, lstm, metrics,
                                                 [&] { return end_to_end(scratch); }};
  std::vector<Outcome> results;
  for (auto& c : criteria) {
    results.push_back(c());
    out << format(results.back()) << std::endl;
  }
  return results;
}

}  // namespace waitcast::acceptance
