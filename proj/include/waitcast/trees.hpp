#pragma once

#include "waitcast/execution.hpp"
#include "waitcast/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace waitcast {

/// Binary tree stored as a flat node array; node 0 is the root. Split nodes
/// send x[feature] < threshold to the left child.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int depth = 0;
  int samples = 0;
  double gain = 0.0;
  std::vector<double> histogram;  // classification leaves: per-class counts
  double weight = 0.0;            // boosting leaves: w* = -G / (H + lambda)

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  template <typename Row>
  const TreeNode& leaf_for(const Row& x) const {
    const TreeNode* node = &nodes.front();
    while (!node->is_leaf()) node = &nodes[static_cast<std::size_t>(x(node->feature) < node->threshold ? node->left : node->right)];
    return *node;
  }
  int leaf_count() const noexcept;
  int depth() const noexcept;
  bool operator==(const Tree&) const = default;
};

// ---------------------------------------------------------------------------
// Classification trees and random forest
// ---------------------------------------------------------------------------

struct TreeConfig {
  int max_depth = 8;         // < 0 means unlimited
  int min_samples_leaf = 2;
  int mtry = 0;              // features examined per split; 0 means ceil(sqrt(p))
};

/// Distinct labels in ascending order; class index i stands for classes[i].
std::vector<int> class_labels(const std::vector<int>& y);

struct ClassificationTree {
  std::vector<int> classes;
  Tree tree;
};

/// Greedy Gini splits over mtry randomly drawn non-constant features. A node
/// becomes a leaf when it is pure, reaches max_depth, or cannot be split
/// into two children of at least min_samples_leaf samples.
ClassificationTree tree_fit(const Eigen::MatrixXd& X, const std::vector<int>& y_classes, const TreeConfig& cfg,
                            Rng& rng);
std::vector<int> tree_predict(const ClassificationTree& t, const Eigen::MatrixXd& X);

struct ForestConfig {
  int n_trees = 200;
  int max_depth = 8;
  int min_samples_leaf = 2;
  int mtry = 0;  // 0 means ceil(sqrt(p))
  std::uint64_t seed = 0;

  void validate(Eigen::Index n_features) const;
};

struct Forest {
  std::vector<int> classes;
  std::vector<Tree> trees;
  ForestConfig config;
  Eigen::Index n_features = 0;

  bool operator==(const Forest& o) const { return classes == o.classes && trees == o.trees && n_features == o.n_features; }
};

/// Each tree sees a bootstrap resample of size n drawn from the substream
/// (seed, tree index), so the forest is independent of thread count.
Forest rf_fit(const Eigen::MatrixXd& X, const std::vector<int>& y_classes, const ForestConfig& cfg,
              Execution exec = Execution::parallel);
/// Votes per (sample, class index).
Eigen::MatrixXi rf_votes(const Forest& f, const Eigen::MatrixXd& X);
/// Majority vote; ties go to the smaller label.
std::vector<int> rf_predict(const Forest& f, const Eigen::MatrixXd& X);

// ---------------------------------------------------------------------------
// Second-order gradient boosting
// ---------------------------------------------------------------------------

/// w* = -G / (H + lambda). Throws DegenerateHessian when H + lambda <= 0.
double leaf_weight(double G, double H, double lambda);

/// 1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - (G_L+G_R)^2/(H_L+H_R+l)] - gamma
double split_gain(double GL, double HL, double GR, double HR, double lambda, double gamma);

/// gamma * T + 1/2 lambda sum (scale * w)^2 over the tree's leaves.
double tree_regularizer(const Tree& t, double gamma, double lambda, double scale = 1.0);

enum class BoostLoss { squared, softmax };
std::string_view to_string(BoostLoss l) noexcept;
BoostLoss parse_boost_loss(std::string_view text);

struct BoostConfig {
  int n_rounds = 100;
  double learning_rate = 0.1;
  double gamma = 0.0;
  double lambda = 1.0;
  int max_depth = 4;
  BoostLoss loss = BoostLoss::softmax;
  std::uint64_t seed = 0;
  double subsample = 0.8;
  std::optional<double> base_score;  // squared loss only; default is mean(y)

  void validate() const;
};

struct BoostModel {
  BoostLoss loss = BoostLoss::squared;
  double base_score = 0.0;            // squared: constant; softmax: logit for every class
  std::vector<int> classes;           // softmax only
  std::vector<std::vector<Tree>> rounds;  // rounds[r][output]
  BoostConfig config;
  Eigen::Index n_features = 0;
  std::vector<double> loss_trace;       // training loss before round 1 and after every round
  std::vector<double> objective_trace;  // loss + sum of regularizers of the applied trees

  int outputs() const noexcept { return loss == BoostLoss::softmax ? static_cast<int>(classes.size()) : 1; }
};

/// Squared loss uses l = (y - yhat)^2 / 2, softmax the multi-class log loss
/// over the labels in y. Each round grows one tree per output on a seeded
/// subsample with exact greedy splits on split_gain; predictions add
/// learning_rate * w* per round.
BoostModel xgb_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const BoostConfig& cfg,
                   Execution exec = Execution::parallel);

struct BoostPrediction {
  Eigen::MatrixXd margins;        // base + eta * sum of tree outputs, per output
  Eigen::VectorXd values;         // squared loss: margins(:, 0)
  Eigen::MatrixXd probabilities;  // softmax only
  std::vector<int> classes;       // softmax only: argmax label, ties to the smaller label
};

BoostPrediction xgb_predict(const BoostModel& m, const Eigen::MatrixXd& X);

void dump_tree(const Tree& t, std::ostream& out, std::string_view indent = "");
void dump_forest(const Forest& f, std::ostream& out);
void dump_boost(const BoostModel& m, std::ostream& out);

}  // namespace waitcast
