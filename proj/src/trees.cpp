#include "waitcast/trees.hpp"

#include "waitcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

namespace waitcast {

int Tree::leaf_count() const noexcept {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int Tree::depth() const noexcept {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

std::vector<int> class_labels(const std::vector<int>& y) {
  std::vector<int> c(y);
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

namespace {

using Index = Eigen::Index;

std::vector<int> encode(const std::vector<int>& y, const std::vector<int>& classes) {
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    out[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), y[i]) - classes.begin());
  return out;
}

int argmax_first(const double* v, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

double gini(const std::vector<double>& counts, double n) {
  double s = 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

// Midpoint of two consecutive distinct values, nudged so that it lies in (lo, hi].
double threshold_between(double lo, double hi) {
  double mid = lo + (hi - lo) / 2.0;
  if (!(mid > lo)) mid = hi;
  return mid;
}

class ClassificationGrower {
 public:
  ClassificationGrower(const Eigen::MatrixXd& X, const std::vector<int>& y, int n_classes, const TreeConfig& cfg,
                       Rng& rng)
      : X_(X), y_(y), n_classes_(n_classes), cfg_(cfg), rng_(rng) {
    mtry_ = cfg.mtry > 0 ? cfg.mtry : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(X.cols()))));
    mtry_ = std::clamp<int>(mtry_, 1, static_cast<int>(X.cols()));
  }

  Tree grow(std::vector<Index> samples) {
    Tree t;
    build(t, samples, 0);
    return t;
  }

 private:
  int build(Tree& t, std::vector<Index>& samples, int depth) {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    std::vector<double> hist(static_cast<std::size_t>(n_classes_), 0.0);
    for (auto i : samples) hist[static_cast<std::size_t>(y_[static_cast<std::size_t>(i)])] += 1.0;
    {
      auto& node = t.nodes.back();
      node.depth = depth;
      node.samples = static_cast<int>(samples.size());
    }
    const double n = static_cast<double>(samples.size());
    const bool pure = std::count_if(hist.begin(), hist.end(), [](double c) { return c > 0.0; }) <= 1;
    const bool depth_ok = cfg_.max_depth < 0 || depth < cfg_.max_depth;
    const int msl = std::max(1, cfg_.min_samples_leaf);

    Split best;
    if (!pure && depth_ok && static_cast<int>(samples.size()) >= 2 * msl) best = find_split(samples, hist, msl);

    if (best.feature < 0) {
      t.nodes[static_cast<std::size_t>(id)].histogram = std::move(hist);
      return id;
    }
    (void)n;
    std::vector<Index> left, right;
    for (auto i : samples) (X_(i, best.feature) < best.threshold ? left : right).push_back(i);
    samples.clear();
    samples.shrink_to_fit();
    const int l = build(t, left, depth + 1);
    const int r = build(t, right, depth + 1);
    auto& node = t.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.gain = best.gain;
    node.left = l;
    node.right = r;
    return id;
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = -1.0;
  };

  Split find_split(const std::vector<Index>& samples, const std::vector<double>& hist, int msl) {
    const double n = static_cast<double>(samples.size());
    const double parent = gini(hist, n);
    std::vector<int> features(static_cast<std::size_t>(X_.cols()));
    std::iota(features.begin(), features.end(), 0);
    rng_.shuffle(std::span<int>(features));

    Split best;
    std::vector<Index> order(samples);
    std::vector<double> left(static_cast<std::size_t>(n_classes_));
    int visited = 0;
    for (int f : features) {
      if (visited >= mtry_) break;
      std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double xa = X_(a, f), xb = X_(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      if (X_(order.front(), f) == X_(order.back(), f)) continue;  // constant here; does not count towards mtry
      ++visited;

      std::fill(left.begin(), left.end(), 0.0);
      std::vector<double> right(hist);
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        const auto c = static_cast<std::size_t>(y_[static_cast<std::size_t>(order[k])]);
        left[c] += 1.0;
        right[c] -= 1.0;
        const double lo = X_(order[k], f), hi = X_(order[k + 1], f);
        if (lo == hi) continue;
        const double nl = static_cast<double>(k + 1), nr = n - nl;
        if (nl < msl || nr < msl) continue;
        const double impurity = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
        const double gain = parent - impurity;
        if (gain > best.gain) best = {f, threshold_between(lo, hi), gain};
      }
    }
    return best;
  }

  const Eigen::MatrixXd& X_;
  const std::vector<int>& y_;
  int n_classes_;
  TreeConfig cfg_;
  Rng& rng_;
  int mtry_ = 1;
};

int leaf_class(const TreeNode& leaf) { return argmax_first(leaf.histogram.data(), leaf.histogram.size()); }

}  // namespace

ClassificationTree tree_fit(const Eigen::MatrixXd& X, const std::vector<int>& y_classes, const TreeConfig& cfg,
                            Rng& rng) {
  if (X.rows() < 1) throw Error(Errc::empty_input, "tree_fit needs at least one sample");
  if (static_cast<Index>(y_classes.size()) != X.rows()) throw Error(Errc::dimension_mismatch, "labels differ from X rows");
  ClassificationTree out;
  out.classes = class_labels(y_classes);
  const auto y = encode(y_classes, out.classes);
  std::vector<Index> all(static_cast<std::size_t>(X.rows()));
  std::iota(all.begin(), all.end(), Index{0});
  out.tree = ClassificationGrower(X, y, static_cast<int>(out.classes.size()), cfg, rng).grow(std::move(all));
  return out;
}

std::vector<int> tree_predict(const ClassificationTree& t, const Eigen::MatrixXd& X) {
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < X.rows(); ++i)
    out[static_cast<std::size_t>(i)] = t.classes[static_cast<std::size_t>(leaf_class(t.tree.leaf_for(X.row(i))))];
  return out;
}

void ForestConfig::validate(Eigen::Index n_features) const {
  if (n_trees < 1) throw Error(Errc::invalid_config, "n_trees must be >= 1");
  if (mtry < 0 || mtry > n_features) throw Error(Errc::invalid_config, "mtry must lie in [0, p]");
  if (min_samples_leaf < 1) throw Error(Errc::invalid_config, "min_samples_leaf must be >= 1");
}

Forest rf_fit(const Eigen::MatrixXd& X, const std::vector<int>& y_classes, const ForestConfig& cfg, Execution exec) {
  const Index n = X.rows();
  if (n < 2) throw Error(Errc::too_few_samples, "random forest needs at least 2 samples");
  if (static_cast<Index>(y_classes.size()) != n) throw Error(Errc::dimension_mismatch, "labels differ from X rows");
  cfg.validate(X.cols());

  Forest f;
  f.config = cfg;
  f.n_features = X.cols();
  f.classes = class_labels(y_classes);
  const auto y = encode(y_classes, f.classes);
  const TreeConfig tc{cfg.max_depth, cfg.min_samples_leaf, cfg.mtry};
  f.trees.resize(static_cast<std::size_t>(cfg.n_trees));

  auto grow = [&](int t) {
    auto rng = Rng::substream(cfg.seed, {0x7265u, static_cast<std::uint64_t>(t)});
    std::vector<Index> boot(static_cast<std::size_t>(n));
    for (auto& b : boot) b = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    f.trees[static_cast<std::size_t>(t)] =
        ClassificationGrower(X, y, static_cast<int>(f.classes.size()), tc, rng).grow(std::move(boot));
  };

  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < cfg.n_trees; ++t) grow(t);
  } else {
    for (int t = 0; t < cfg.n_trees; ++t) grow(t);
  }
  return f;
}

Eigen::MatrixXi rf_votes(const Forest& f, const Eigen::MatrixXd& X) {
  if (X.cols() != f.n_features)
    throw Error(Errc::dimension_mismatch, "forest expects " + std::to_string(f.n_features) + " features");
  Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(X.rows(), static_cast<Index>(f.classes.size()));
  for (const auto& t : f.trees)
    for (Index i = 0; i < X.rows(); ++i) votes(i, leaf_class(t.leaf_for(X.row(i))))++;
  return votes;
}

std::vector<int> rf_predict(const Forest& f, const Eigen::MatrixXd& X) {
  const auto votes = rf_votes(f, X);
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < X.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < votes.cols(); ++c)
      if (votes(i, c) > votes(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = f.classes[static_cast<std::size_t>(best)];
  }
  return out;
}

double leaf_weight(double G, double H, double lambda) {
  if (!(H + lambda > 0.0)) throw Error(Errc::degenerate_hessian, "H + lambda must be > 0");
  return -G / (H + lambda);
}

double split_gain(double GL, double HL, double GR, double HR, double lambda, double gamma) {
  const double G = GL + GR, H = HL + HR;
  return 0.5 * (GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - G * G / (H + lambda)) - gamma;
}

double tree_regularizer(const Tree& t, double gamma, double lambda, double scale) {
  double leaves = 0.0, sq = 0.0;
  for (const auto& n : t.nodes) {
    if (!n.is_leaf()) continue;
    leaves += 1.0;
    sq += (scale * n.weight) * (scale * n.weight);
  }
  return gamma * leaves + 0.5 * lambda * sq;
}

std::string_view to_string(BoostLoss l) noexcept { return l == BoostLoss::squared ? "squared" : "softmax"; }

BoostLoss parse_boost_loss(std::string_view text) {
  if (text == "squared") return BoostLoss::squared;
  if (text == "softmax") return BoostLoss::softmax;
  throw Error(Errc::invalid_config, "unknown boosting loss '" + std::string(text) + "'");
}

void BoostConfig::validate() const {
  if (n_rounds < 0) throw Error(Errc::invalid_config, "n_rounds must be >= 0");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw Error(Errc::invalid_config, "learning_rate must lie in (0, 1]");
  if (!(gamma >= 0.0)) throw Error(Errc::invalid_config, "gamma must be >= 0");
  if (!(lambda >= 0.0)) throw Error(Errc::invalid_config, "lambda must be >= 0");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw Error(Errc::invalid_config, "subsample must lie in (0, 1]");
}

namespace {

class BoostGrower {
 public:
  BoostGrower(const Eigen::MatrixXd& X, const Eigen::VectorXd& g, const Eigen::VectorXd& h, const BoostConfig& cfg)
      : X_(X), g_(g), h_(h), cfg_(cfg) {}

  Tree grow(std::vector<Index> samples) {
    Tree t;
    build(t, samples, 0);
    return t;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int build(Tree& t, std::vector<Index>& samples, int depth) {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    double G = 0.0, H = 0.0;
    for (auto i : samples) {
      G += g_(i);
      H += h_(i);
    }
    t.nodes.back().depth = depth;
    t.nodes.back().samples = static_cast<int>(samples.size());

    Split best;
    if (depth < cfg_.max_depth && samples.size() >= 2) best = find_split(samples, G, H);
    if (best.feature < 0) {
      t.nodes[static_cast<std::size_t>(id)].weight = leaf_weight(G, H, cfg_.lambda);
      return id;
    }
    std::vector<Index> left, right;
    for (auto i : samples) (X_(i, best.feature) < best.threshold ? left : right).push_back(i);
    samples.clear();
    const int l = build(t, left, depth + 1);
    const int r = build(t, right, depth + 1);
    auto& node = t.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.gain = best.gain;
    node.left = l;
    node.right = r;
    return id;
  }

  Split find_split(const std::vector<Index>& samples, double G, double H) {
    Split best;
    std::vector<Index> order(samples);
    for (int f = 0; f < X_.cols(); ++f) {
      std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double xa = X_(a, f), xb = X_(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      double GL = 0.0, HL = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        GL += g_(order[k]);
        HL += h_(order[k]);
        const double lo = X_(order[k], f), hi = X_(order[k + 1], f);
        if (lo == hi) continue;
        const double GR = G - GL, HR = H - HL;
        if (!(HL + cfg_.lambda > 0.0) || !(HR + cfg_.lambda > 0.0)) continue;
        const double gain = split_gain(GL, HL, GR, HR, cfg_.lambda, cfg_.gamma);
        if (gain > best.gain) best = {f, threshold_between(lo, hi), gain};
      }
    }
    return best;
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& g_;
  const Eigen::VectorXd& h_;
  const BoostConfig& cfg_;
};

double tree_output(const Tree& t, const Eigen::MatrixXd& X, Index i) { return t.leaf_for(X.row(i)).weight; }

void softmax_rows(const Eigen::MatrixXd& margins, Eigen::MatrixXd& p) {
  p.resize(margins.rows(), margins.cols());
  for (Index i = 0; i < margins.rows(); ++i) {
    const double mx = margins.row(i).maxCoeff();
    double z = 0.0;
    for (Index c = 0; c < margins.cols(); ++c) z += (p(i, c) = std::exp(margins(i, c) - mx));
    p.row(i) /= z;
  }
}

double training_loss(const BoostModel& m, const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                     const std::vector<int>& yi) {
  double loss = 0.0;
  if (m.loss == BoostLoss::squared) {
    for (Index i = 0; i < y.size(); ++i) loss += 0.5 * (y(i) - F(i, 0)) * (y(i) - F(i, 0));
  } else {
    for (Index i = 0; i < F.rows(); ++i) {
      const double mx = F.row(i).maxCoeff();
      const double lse = mx + std::log((F.row(i).array() - mx).exp().sum());
      loss += lse - F(i, yi[static_cast<std::size_t>(i)]);
    }
  }
  return loss;
}

}  // namespace

BoostModel xgb_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const BoostConfig& cfg, Execution exec) {
  cfg.validate();
  const Index n = X.rows();
  if (n < 2) throw Error(Errc::too_few_samples, "boosting needs n >= 2");
  if (y.size() != n) throw Error(Errc::dimension_mismatch, "target length differs from X rows");

  BoostModel m;
  m.loss = cfg.loss;
  m.config = cfg;
  m.n_features = X.cols();

  std::vector<int> yi;
  if (cfg.loss == BoostLoss::squared) {
    m.base_score = cfg.base_score.value_or(y.mean());
  } else {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      labels[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(y(i)));
      if (static_cast<double>(labels[static_cast<std::size_t>(i)]) != y(i))
        throw Error(Errc::invalid_config, "softmax boosting needs integer labels");
    }
    m.classes = class_labels(labels);
    yi = encode(labels, m.classes);
    m.base_score = 0.0;
  }

  const int K = m.outputs();
  Eigen::MatrixXd F = Eigen::MatrixXd::Constant(n, K, m.base_score);
  double penalty = 0.0;
  m.loss_trace.push_back(training_loss(m, F, y, yi));
  m.objective_trace.push_back(m.loss_trace.back());

  const auto m_sub = std::clamp<Index>(static_cast<Index>(std::llround(cfg.subsample * static_cast<double>(n))), 1, n);
  std::vector<Eigen::VectorXd> grad(static_cast<std::size_t>(K), Eigen::VectorXd(n));
  std::vector<Eigen::VectorXd> hess(static_cast<std::size_t>(K), Eigen::VectorXd(n));
  Eigen::MatrixXd P;

  for (int r = 0; r < cfg.n_rounds; ++r) {
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    if (m_sub < n) {
      auto rng = Rng::substream(cfg.seed, {0x6762u, static_cast<std::uint64_t>(r)});
      rng.shuffle(std::span<Index>(rows));
      rows.resize(static_cast<std::size_t>(m_sub));
      std::sort(rows.begin(), rows.end());
    }

    if (m.loss == BoostLoss::squared) {
      grad[0] = F.col(0) - y;
      hess[0].setOnes();
    } else {
      softmax_rows(F, P);
      for (int k = 0; k < K; ++k)
        for (Index i = 0; i < n; ++i) {
          const double p = P(i, k);
          grad[static_cast<std::size_t>(k)](i) = p - (yi[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0);
          hess[static_cast<std::size_t>(k)](i) = std::max(p * (1.0 - p), 1e-16);
        }
    }

    std::vector<Tree> trees(static_cast<std::size_t>(K));
    if (K > 1 || m.loss == BoostLoss::squared) {
      auto grow = [&](int k) {
        trees[static_cast<std::size_t>(k)] =
            BoostGrower(X, grad[static_cast<std::size_t>(k)], hess[static_cast<std::size_t>(k)], cfg).grow(rows);
      };
      if (exec == Execution::parallel && K > 1) {
#pragma omp parallel for schedule(dynamic)
        for (int k = 0; k < K; ++k) grow(k);
      } else {
        for (int k = 0; k < K; ++k) grow(k);
      }
    } else {
      // Single class: every gradient is zero and the tree is a zero leaf.
      trees[0].nodes.emplace_back();
      trees[0].nodes.back().samples = static_cast<int>(rows.size());
    }

    for (int k = 0; k < K; ++k) {
      const auto& t = trees[static_cast<std::size_t>(k)];
      for (Index i = 0; i < n; ++i) F(i, k) += cfg.learning_rate * tree_output(t, X, i);
      penalty += tree_regularizer(t, cfg.gamma, cfg.lambda, cfg.learning_rate);
    }
    m.rounds.push_back(std::move(trees));
    const double loss = training_loss(m, F, y, yi);
    if (!std::isfinite(loss)) throw Error(Errc::non_finite_loss, "training loss is not finite at round " + std::to_string(r));
    m.loss_trace.push_back(loss);
    m.objective_trace.push_back(loss + penalty);
  }
  return m;
}

BoostPrediction xgb_predict(const BoostModel& m, const Eigen::MatrixXd& X) {
  if (X.cols() != m.n_features)
    throw Error(Errc::dimension_mismatch, "model expects " + std::to_string(m.n_features) + " features");
  const int K = m.outputs();
  BoostPrediction out;
  out.margins = Eigen::MatrixXd::Constant(X.rows(), K, m.base_score);
  for (Index i = 0; i < X.rows(); ++i)
    for (int k = 0; k < K; ++k) {
      double sum = 0.0;
      for (const auto& round : m.rounds) sum += round[static_cast<std::size_t>(k)].leaf_for(X.row(i)).weight;
      out.margins(i, k) += m.config.learning_rate * sum;
    }
  if (m.loss == BoostLoss::squared) {
    out.values = out.margins.col(0);
  } else {
    softmax_rows(out.margins, out.probabilities);
    out.classes.resize(static_cast<std::size_t>(X.rows()));
    for (Index i = 0; i < X.rows(); ++i) {
      const Eigen::VectorXd row = out.margins.row(i).transpose();
      out.classes[static_cast<std::size_t>(i)] =
          m.classes[static_cast<std::size_t>(argmax_first(row.data(), static_cast<std::size_t>(K)))];
    }
  }
  return out;
}

namespace {

void dump_node(const Tree& t, int id, std::ostream& out, const std::string& indent) {
  const auto& n = t.nodes[static_cast<std::size_t>(id)];
  char buf[160];
  if (n.is_leaf()) {
    if (n.histogram.empty()) {
      std::snprintf(buf, sizeof buf, "leaf weight=%.17g samples=%d\n", n.weight, n.samples);
      out << indent << buf;
    } else {
      out << indent << "leaf samples=" << n.samples << " histogram=[";
      for (std::size_t c = 0; c < n.histogram.size(); ++c) out << (c ? "," : "") << n.histogram[c];
      out << "]\n";
    }
    return;
  }
  std::snprintf(buf, sizeof buf, "split feature=%d threshold=%.17g gain=%.17g samples=%d\n", n.feature, n.threshold,
                n.gain, n.samples);
  out << indent << buf;
  dump_node(t, n.left, out, indent + "  ");
  dump_node(t, n.right, out, indent + "  ");
}

}  // namespace

void dump_tree(const Tree& t, std::ostream& out, std::string_view indent) {
  if (!t.nodes.empty()) dump_node(t, 0, out, std::string(indent));
}

void dump_forest(const Forest& f, std::ostream& out) {
  out << "model = random_forest\ntrees = " << f.trees.size() << "\nclasses = [";
  for (std::size_t c = 0; c < f.classes.size(); ++c) out << (c ? "," : "") << f.classes[c];
  out << "]\n";
  for (std::size_t t = 0; t < f.trees.size(); ++t) {
    out << "tree " << t << ":\n";
    dump_tree(f.trees[t], out, "  ");
  }
}

void dump_boost(const BoostModel& m, std::ostream& out) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", m.base_score);
  out << "model = boosted_trees\nloss = " << to_string(m.loss) << "\nbase_score = " << buf
      << "\nlearning_rate = " << m.config.learning_rate << "\nrounds = " << m.rounds.size() << "\n";
  if (!m.classes.empty()) {
    out << "classes = [";
    for (std::size_t c = 0; c < m.classes.size(); ++c) out << (c ? "," : "") << m.classes[c];
    out << "]\n";
  }
  for (std::size_t r = 0; r < m.rounds.size(); ++r)
    for (std::size_t k = 0; k < m.rounds[r].size(); ++k) {
      out << "round " << r << " output " << k << ":\n";
      dump_tree(m.rounds[r][k], out, "  ");
    }
}

}  // namespace waitcast
