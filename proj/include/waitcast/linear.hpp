#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <vector>

namespace waitcast {

struct PolyFit {
  std::vector<double> fitted;
  int degree_used = 0;  // lower than requested when the design was rank deficient
};

/// Least-squares polynomial in time (t rescaled to [0, 1]) fitted to one
/// series; returns the fitted values. Falls back to lower degrees when the
/// design is rank deficient or degree + 1 exceeds the series length.
PolyFit ols_smooth(std::span<const double> series, int degree);

struct VarModel {
  int order = 1;
  std::vector<Eigen::MatrixXd> lags;  // A_1..A_p, each k x k
  Eigen::VectorXd intercept;
  bool ridge_used = false;
};

/// Fits x_t = c + sum_i A_i x_{t-i} by least squares; rows of `group` are
/// time points, columns are series. A singular design is stabilised with a
/// 1e-8 ridge.
VarModel var_fit(const Eigen::MatrixXd& group, int p);

/// One-step fitted values for t >= p; rows t < p are copied from the input.
Eigen::MatrixXd var_fitted(const VarModel& m, const Eigen::MatrixXd& group);
Eigen::MatrixXd var_smooth(const Eigen::MatrixXd& group, int p);

/// sign(z) * max(|z| - g, 0)
double soft_threshold(double z, double g) noexcept;

struct EnetConfig {
  double alpha = 0.5;
  double lambda = 0.1;
  double epsilon = 0.0;  // relaxation subtracted from alpha for correlated predictors
  int max_iter = 10000;
  double tol = 1e-8;

  double effective_alpha() const noexcept { return alpha - epsilon; }
  double l1() const noexcept { return lambda * effective_alpha(); }
  double l2() const noexcept { return lambda * (1.0 - effective_alpha()) / 2.0; }
  void validate() const;
};

/// Elastic net fitted on internally standardised columns (population sd).
/// With X~ the standardised design and y~ the centred target the objective is
///
///   F(b) = 1/(2n) |y~ - X~ b|^2 + l1 |b|_1 + l2 |b|_2^2,
///   l1 = lambda * a,  l2 = lambda * (1 - a) / 2,  a = alpha - epsilon,
///
/// i.e. the mean-squared loss plus lambda * (a|b| + (1-a) b^2 / 2). The
/// coordinate update is b_j <- S(rho_j, l1) / (|x~_j|^2 / n + 2 l2). In
/// terms of the unit-norm design X = X~ / sqrt(n), the ridge solution is
/// (X'X + 2 l2 I)^-1 X'y and the lasso solution on an orthonormal design is
/// the soft-thresholded OLS coefficient.
struct EnetModel {
  double intercept = 0.0;               // on the original scale
  Eigen::VectorXd coefficients;         // on the original scale
  Eigen::VectorXd standardized_coefficients;
  Eigen::VectorXd column_means;
  Eigen::VectorXd column_sds;           // 0 marks a constant (dropped) column
  double target_mean = 0.0;
  EnetConfig config;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // F before the first sweep and after each sweep
};

EnetModel enet_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const EnetConfig& cfg);
Eigen::VectorXd enet_predict(const EnetModel& m, const Eigen::MatrixXd& X);

/// F(b) for standardised coefficients `b` on the data the model was fitted to.
double enet_objective(const EnetModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& b);

void dump_enet(const EnetModel& m, std::ostream& out);

}  // namespace waitcast
