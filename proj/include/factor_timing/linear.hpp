#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "factor_timing/error.hpp"
#include "factor_timing/stats.hpp"

namespace factor_timing {

/// Pivot tolerance of the rank-revealing solves, relative to the largest pivot.
inline constexpr double kPivotTolerance = 1e-12;

/// Per-feature affine standardization estimated on a fitting sample.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // population stdev; 0 marks a constant feature

  static Standardizer fit(const Eigen::MatrixXd& X) {
    Standardizer s;
    const auto p = X.cols();
    s.mean.resize(p);
    s.scale.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::VectorXd col = X.col(j);
      std::span<const double> v(col.data(), static_cast<std::size_t>(col.size()));
      s.mean(j) = stats::mean(v);
      s.scale(j) = stats::all_equal(v) ? 0.0 : stats::population_stdev(v);
    }
    return s;
  }

  /// Constant features map to 0.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Z(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (scale(j) == 0.0) Z.col(j).setZero();
      else Z.col(j) = (X.col(j).array() - mean(j)) / scale(j);
    }
    return Z;
  }

  Eigen::VectorXd transform_row(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    Eigen::VectorXd z(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) z(j) = scale(j) == 0.0 ? 0.0 : (x(j) - mean(j)) / scale(j);
    return z;
  }
};

/// Least-squares solution of A b = y via column-pivoted Householder QR.
/// Throws SingularDesign when A is numerically rank deficient.
inline Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(kPivotTolerance);
  if (qr.rank() < A.cols())
    throw Error(ErrorCode::singular_design, "design of " + std::to_string(A.cols()) + " columns has numerical rank " +
                                                std::to_string(qr.rank()));
  return qr.solve(y);
}

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd D(X.rows(), X.cols() + 1);
  D.col(0).setOnes();
  D.rightCols(X.cols()) = X;
  return D;
}

/// Linear predictor on raw feature scale: intercept + slopes . x.
struct LinearFit {
  double intercept = 0.0;
  Eigen::VectorXd slopes;
  /// Slopes on standardized features (ridge only; empty for OLS).
  Eigen::VectorXd standardized_slopes;
  Standardizer standardizer;
  /// Predictions floored at zero (Campbell-Thompson).
  bool floor_at_zero = false;

  double raw(const Eigen::Ref<const Eigen::VectorXd>& x) const { return intercept + slopes.dot(x); }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const double r = raw(x);
    return floor_at_zero ? std::max(r, 0.0) : r;
  }
};

inline void check_finite(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (!X.allFinite() || !y.allFinite()) throw Error(ErrorCode::invalid_argument, "non-finite value in fitting data");
  if (X.rows() != y.size())
    throw Error(ErrorCode::arity_mismatch, "X has " + std::to_string(X.rows()) + " rows but y has " +
                                               std::to_string(y.size()));
}

/// OLS with intercept. When `slope_signs` is non-empty, any slope whose sign
/// contradicts its prior is dropped and the remaining design refit, until no
/// violation remains.
inline LinearFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, bool ct_truncate,
                         const std::vector<int>& slope_signs = {}) {
  check_finite(X, y);
  const auto p = X.cols();
  if (X.rows() < p + 1)
    throw Error(ErrorCode::too_few_rows, "OLS needs at least " + std::to_string(p + 1) + " rows, got " +
                                             std::to_string(X.rows()));
  if (!slope_signs.empty() && static_cast<Eigen::Index>(slope_signs.size()) != p)
    throw Error(ErrorCode::arity_mismatch, "ct_slope_signs length differs from feature count");

  std::vector<bool> active(static_cast<std::size_t>(p), true);
  LinearFit fit;
  fit.floor_at_zero = ct_truncate;
  while (true) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < p; ++j)
      if (active[static_cast<std::size_t>(j)]) cols.push_back(j);
    Eigen::MatrixXd D(X.rows(), static_cast<Eigen::Index>(cols.size()) + 1);
    D.col(0).setOnes();
    for (std::size_t k = 0; k < cols.size(); ++k) D.col(static_cast<Eigen::Index>(k) + 1) = X.col(cols[k]);
    const Eigen::VectorXd b = solve_least_squares(D, y);

    fit.intercept = b(0);
    fit.slopes = Eigen::VectorXd::Zero(p);
    for (std::size_t k = 0; k < cols.size(); ++k) fit.slopes(cols[k]) = b(static_cast<Eigen::Index>(k) + 1);

    bool violated = false;
    for (Eigen::Index j = 0; j < p && !slope_signs.empty(); ++j) {
      const int prior = slope_signs[static_cast<std::size_t>(j)];
      if (active[static_cast<std::size_t>(j)] && prior != 0 && prior * fit.slopes(j) < 0.0) {
        active[static_cast<std::size_t>(j)] = false;
        violated = true;
      }
    }
    if (!violated) return fit;
  }
}

/// Ridge on standardized features with an unpenalized intercept:
/// minimizes |y - b0 - Z b|^2 + lambda |b|^2. Constant features get a zero
/// slope and a message in `warnings`.
inline LinearFit ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                           std::vector<std::string>* warnings = nullptr) {
  check_finite(X, y);
  if (!(lambda >= 0.0)) throw Error(ErrorCode::invalid_argument, "ridge lambda must be >= 0");
  if (X.rows() < 2) throw Error(ErrorCode::too_few_rows, "ridge needs at least 2 rows");
  const auto n = X.rows();
  const auto p = X.cols();

  LinearFit fit;
  fit.standardizer = Standardizer::fit(X);
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (fit.standardizer.scale(j) == 0.0) {
      if (warnings) warnings->push_back("ZeroVarianceFeature: feature " + std::to_string(j) + " has zero variance");
    } else {
      cols.push_back(j);
    }
  }
  const Eigen::MatrixXd Z = fit.standardizer.transform(X);
  const double y_mean = y.mean();
  const auto k = static_cast<Eigen::Index>(cols.size());

  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  if (k > 0) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + k);
    for (Eigen::Index c = 0; c < k; ++c) A.col(c).head(n) = Z.col(cols[static_cast<std::size_t>(c)]);
    A.bottomRows(k).diagonal().setConstant(std::sqrt(lambda));
    rhs.head(n) = y.array() - y_mean;
    b = solve_least_squares(A, rhs);
  }

  fit.standardized_slopes = Eigen::VectorXd::Zero(p);
  fit.slopes = Eigen::VectorXd::Zero(p);
  fit.intercept = y_mean;
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto j = cols[static_cast<std::size_t>(c)];
    fit.standardized_slopes(j) = b(c);
    fit.slopes(j) = b(c) / fit.standardizer.scale(j);
    fit.intercept -= fit.slopes(j) * fit.standardizer.mean(j);
  }
  return fit;
}

/// VIF_j = 1 / (1 - R^2_j) from regressing feature j on the other features
/// (with intercept). Perfect collinearity yields +infinity.
inline Eigen::VectorXd variance_inflation_factors(const Eigen::MatrixXd& X) {
  const auto p = X.cols();
  Eigen::VectorXd vif(p);
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::VectorXd target = X.col(j);
    const double tss = (target.array() - target.mean()).square().sum();
    if (tss == 0.0) {
      vif(j) = inf;
      continue;
    }
    Eigen::MatrixXd others(X.rows(), p - 1);
    for (Eigen::Index c = 0, k = 0; c < p; ++c)
      if (c != j) others.col(k++) = X.col(c);
    const Eigen::MatrixXd D = with_intercept(others);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
    qr.setThreshold(kPivotTolerance);
    // A rank-deficient "others" block is still a valid projection; the
    // least-squares residual is what matters.
    const Eigen::VectorXd beta = qr.solve(target);
    const double rss = (target - D * beta).squaredNorm();
    const double r2 = 1.0 - rss / tss;
    vif(j) = (r2 >= 1.0 - 1e-12) ? inf : 1.0 / (1.0 - r2);
  }
  return vif;
}

/// Classical OLS inference. Index 0 of the coefficient vectors is the
/// intercept, followed by the features in design order.
struct RegressionSummary {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd t_statistics;
  Eigen::VectorXd p_values;
  Eigen::VectorXd residuals;
  Eigen::VectorXd vif;  // per feature, +inf for perfect collinearity
  double r_squared = 0.0;
  Eigen::Index n_obs = 0;
};

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
inline double two_sided_p_value(double t, double dof) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(dof);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return std::clamp(p, 0.0, 1.0);
}

inline RegressionSummary linear_inference(const LinearFit& fit, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  check_finite(X, y);
  const auto n = X.rows();
  const auto p = X.cols() + 1;
  if (fit.slopes.size() != X.cols()) throw Error(ErrorCode::arity_mismatch, "model arity differs from design");
  if (n <= p) throw Error(ErrorCode::too_few_rows, "inference needs more rows than coefficients");
  const Eigen::MatrixXd D = with_intercept(X);

  RegressionSummary s;
  s.n_obs = n;
  s.coefficients.resize(p);
  s.coefficients(0) = fit.intercept;
  s.coefficients.tail(p - 1) = fit.slopes;
  s.residuals = y - D * s.coefficients;
  const double dof = static_cast<double>(n - p);
  const double sigma2 = s.residuals.squaredNorm() / dof;
  const double tss = (y.array() - y.mean()).square().sum();
  s.r_squared = tss > 0.0 ? 1.0 - s.residuals.squaredNorm() / tss : 0.0;

  const Eigen::MatrixXd gram = D.transpose() * D;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
  qr.setThreshold(kPivotTolerance);
  if (qr.rank() < p) throw Error(ErrorCode::singular_design, "X'X is numerically singular");
  const Eigen::MatrixXd cov = sigma2 * qr.inverse();

  s.standard_errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  s.t_statistics = s.coefficients.cwiseQuotient(s.standard_errors);
  s.p_values.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) s.p_values(i) = two_sided_p_value(s.t_statistics(i), dof);
  s.vif = variance_inflation_factors(X);
  return s;
}

}  // namespace factor_timing
