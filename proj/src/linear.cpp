#include "waitcast/linear.hpp"

#include "waitcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace waitcast {

PolyFit ols_smooth(std::span<const double> series, int degree) {
  const auto n = static_cast<Eigen::Index>(series.size());
  if (n == 0) throw Error(Errc::empty_input, "ols_smooth on an empty series");
  if (degree < 0) throw Error(Errc::invalid_config, "polynomial degree must be >= 0");

  Eigen::VectorXd y(n);
  for (Eigen::Index t = 0; t < n; ++t) y(t) = series[static_cast<std::size_t>(t)];

  for (int deg = std::min<int>(degree, static_cast<int>(n - 1)); deg >= 0; --deg) {
    Eigen::MatrixXd V(n, deg + 1);
    for (Eigen::Index t = 0; t < n; ++t) {
      const double u = n > 1 ? static_cast<double>(t) / static_cast<double>(n - 1) : 0.0;
      double p = 1.0;
      for (int c = 0; c <= deg; ++c, p *= u) V(t, c) = p;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(V);
    if (qr.rank() < deg + 1) continue;
    const Eigen::VectorXd fitted = V * qr.solve(y);
    return {std::vector<double>(fitted.data(), fitted.data() + n), deg};
  }
  // Unreachable: the degree-0 design is a column of ones.
  throw Error(Errc::shape_mismatch, "ols_smooth could not fit a constant");
}

VarModel var_fit(const Eigen::MatrixXd& group, int p) {
  const Eigen::Index T = group.rows(), k = group.cols();
  if (p < 1) throw Error(Errc::invalid_config, "VAR order must be >= 1");
  if (k < 1) throw Error(Errc::empty_input, "VAR needs at least one series");
  if (T <= p) throw Error(Errc::too_few_samples, "VAR(" + std::to_string(p) + ") needs more than p observations");

  const Eigen::Index rows = T - p, cols = 1 + k * p;
  Eigen::MatrixXd Z(rows, cols);
  Eigen::MatrixXd Y = group.bottomRows(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index t = r + p;
    Z(r, 0) = 1.0;
    for (int lag = 1; lag <= p; ++lag) Z.block(r, 1 + (lag - 1) * k, 1, k) = group.row(t - lag);
  }

  VarModel m;
  m.order = p;
  Eigen::MatrixXd B;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  if (qr.rank() == cols) {
    B = qr.solve(Y);
  } else {
    const Eigen::MatrixXd gram = Z.transpose() * Z + 1e-8 * Eigen::MatrixXd::Identity(cols, cols);
    B = gram.ldlt().solve(Z.transpose() * Y);
    m.ridge_used = true;
  }
  m.intercept = B.row(0).transpose();
  for (int lag = 1; lag <= p; ++lag) m.lags.push_back(B.block(1 + (lag - 1) * k, 0, k, k).transpose());
  return m;
}

Eigen::MatrixXd var_fitted(const VarModel& m, const Eigen::MatrixXd& group) {
  const Eigen::Index T = group.rows(), k = group.cols();
  if (m.intercept.size() != k) throw Error(Errc::dimension_mismatch, "VAR model width differs from data");
  Eigen::MatrixXd out = group;
  for (Eigen::Index t = m.order; t < T; ++t) {
    Eigen::VectorXd x = m.intercept;
    for (int lag = 1; lag <= m.order; ++lag) x += m.lags[static_cast<std::size_t>(lag - 1)] * group.row(t - lag).transpose();
    out.row(t) = x.transpose();
  }
  return out;
}

Eigen::MatrixXd var_smooth(const Eigen::MatrixXd& group, int p) { return var_fitted(var_fit(group, p), group); }

double soft_threshold(double z, double g) noexcept {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

void EnetConfig::validate() const {
  const double a = effective_alpha();
  if (!(a >= 0.0 && a <= 1.0)) throw Error(Errc::invalid_config, "alpha - epsilon must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw Error(Errc::invalid_config, "lambda must be >= 0");
  if (!(tol > 0.0)) throw Error(Errc::invalid_config, "tol must be > 0");
  if (max_iter < 1) throw Error(Errc::invalid_config, "max_iter must be >= 1");
}

namespace {

Eigen::MatrixXd standardize(const EnetModel& m, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Xs(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (m.column_sds(j) > 0.0)
      Xs.col(j) = (X.col(j).array() - m.column_means(j)) / m.column_sds(j);
    else
      Xs.col(j).setZero();
  }
  return Xs;
}

double objective(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& yc, const Eigen::VectorXd& b, double l1,
                 double l2) {
  const double n = static_cast<double>(Xs.rows());
  return (yc - Xs * b).squaredNorm() / (2.0 * n) + l1 * b.lpNorm<1>() + l2 * b.squaredNorm();
}

}  // namespace

EnetModel enet_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const EnetConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = X.rows(), p = X.cols();
  if (n < 2) throw Error(Errc::too_few_samples, "elastic net needs n >= 2");
  if (p < 1) throw Error(Errc::empty_input, "elastic net needs at least one column");
  if (y.size() != n) throw Error(Errc::dimension_mismatch, "target length differs from X rows");

  EnetModel m;
  m.config = cfg;
  m.column_means = X.colwise().mean().transpose();
  m.column_sds.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double var = (X.col(j).array() - m.column_means(j)).square().mean();
    m.column_sds(j) = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  m.target_mean = y.mean();

  const Eigen::MatrixXd Xs = standardize(m, X);
  const Eigen::VectorXd yc = y.array() - m.target_mean;
  const double nd = static_cast<double>(n);
  const double l1 = cfg.l1(), l2 = cfg.l2();

  Eigen::VectorXd norms(p);
  for (Eigen::Index j = 0; j < p; ++j) norms(j) = Xs.col(j).squaredNorm() / nd;

  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd r = yc;
  m.objective_trace.push_back(objective(Xs, yc, b, l1, l2));

  for (int it = 0; it < cfg.max_iter; ++it) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (m.column_sds(j) == 0.0) continue;
      const double old = b(j);
      const double rho = Xs.col(j).dot(r) / nd + norms(j) * old;
      const double updated = soft_threshold(rho, l1) / (norms(j) + 2.0 * l2);
      if (updated != old) {
        r -= (updated - old) * Xs.col(j);
        b(j) = updated;
        max_delta = std::max(max_delta, std::abs(updated - old));
      }
    }
    m.iterations = it + 1;
    m.objective_trace.push_back(objective(Xs, yc, b, l1, l2));
    if (!std::isfinite(m.objective_trace.back())) throw Error(Errc::non_finite_loss, "elastic net diverged");
    if (max_delta < cfg.tol) {
      m.converged = true;
      break;
    }
  }

  m.standardized_coefficients = b;
  m.coefficients.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) m.coefficients(j) = m.column_sds(j) > 0.0 ? b(j) / m.column_sds(j) : 0.0;
  m.intercept = m.target_mean - m.coefficients.dot(m.column_means);
  return m;
}

Eigen::VectorXd enet_predict(const EnetModel& m, const Eigen::MatrixXd& X) {
  if (X.cols() != m.coefficients.size())
    throw Error(Errc::dimension_mismatch, "expected " + std::to_string(m.coefficients.size()) + " columns, got " +
                                              std::to_string(X.cols()));
  return (X * m.coefficients).array() + m.intercept;
}

double enet_objective(const EnetModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& b) {
  const Eigen::VectorXd yc = y.array() - m.target_mean;
  return objective(standardize(m, X), yc, b, m.config.l1(), m.config.l2());
}

void dump_enet(const EnetModel& m, std::ostream& out) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "model = elastic_net\n"
      << "alpha = " << num(m.config.alpha) << "\n"
      << "lambda = " << num(m.config.lambda) << "\n"
      << "epsilon = " << num(m.config.epsilon) << "\n"
      << "l1 = " << num(m.config.l1()) << "\n"
      << "l2 = " << num(m.config.l2()) << "\n"
      << "iterations = " << m.iterations << "\n"
      << "converged = " << (m.converged ? "true" : "false") << "\n"
      << "intercept = " << num(m.intercept) << "\n";
  for (Eigen::Index j = 0; j < m.coefficients.size(); ++j) out << "beta[" << j << "] = " << num(m.coefficients(j)) << "\n";
}

}  // namespace waitcast
