#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "factor_timing/error.hpp"
#include "factor_timing/forest.hpp"
#include "factor_timing/linear.hpp"
#include "factor_timing/mlp.hpp"
#include "factor_timing/model_spec.hpp"

namespace factor_timing {

/// A trained regressor. Immutable once built; predict is deterministic.
class FittedModel {
 public:
  using Params = std::variant<LinearFit, ForestFit, MlpFit>;

  FittedModel(ModelSpec spec, Eigen::Index n_features, Params params, std::vector<std::string> warnings = {})
      : spec_(std::move(spec)), n_features_(n_features), params_(std::move(params)), warnings_(std::move(warnings)) {}

  const ModelSpec& spec() const noexcept { return spec_; }
  Eigen::Index n_features() const noexcept { return n_features_; }
  const Params& params() const noexcept { return params_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  const LinearFit& linear() const { return std::get<LinearFit>(params_); }
  const ForestFit& forest() const { return std::get<ForestFit>(params_); }
  const MlpFit& mlp() const { return std::get<MlpFit>(params_); }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != n_features_)
      throw Error(ErrorCode::arity_mismatch, "expected " + std::to_string(n_features_) + " features, got " +
                                                 std::to_string(x.size()));
    if (!x.allFinite()) throw Error(ErrorCode::invalid_argument, "non-finite feature value");
    const double raw = std::visit([&](const auto& p) { return p.predict(x); }, params_);
    return spec_.ct_truncate ? std::max(raw, 0.0) : raw;
  }

  double predict(std::span<const double> x) const {
    return predict(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
  }

 private:
  ModelSpec spec_;
  Eigen::Index n_features_;
  Params params_;
  std::vector<std::string> warnings_;
};

inline double predict(const FittedModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return model.predict(x);
}

inline FittedModel fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, bool ct_truncate = true,
                           const std::vector<int>& slope_signs = {}) {
  auto spec = ModelSpec::ols_ct();
  spec.ct_truncate = ct_truncate;
  spec.ct_slope_signs = slope_signs;
  return FittedModel(spec, X.cols(), ols_fit(X, y, ct_truncate, slope_signs));
}

inline FittedModel fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  std::vector<std::string> warnings;
  auto fit = ridge_fit(X, y, lambda, &warnings);
  return FittedModel(ModelSpec::ridge(lambda), X.cols(), std::move(fit), std::move(warnings));
}

inline FittedModel fit_random_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                                     std::uint64_t seed) {
  auto spec = ModelSpec::random_forest();
  spec.forest = params;
  spec.seed = seed;
  return FittedModel(spec, X.cols(), forest_fit(X, y, params, seed));
}

inline FittedModel fit_nn3(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const MlpParams& params,
                           std::uint64_t seed) {
  auto spec = ModelSpec::nn3();
  spec.mlp = params;
  spec.seed = seed;
  return FittedModel(spec, X.cols(), mlp_fit(X, y, params, seed));
}

/// Fits `spec` on (X, y). `seed` overrides spec.seed for the stochastic kinds.
inline FittedModel fit(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       std::uint64_t seed) {
  spec.validate();
  auto with_seed = spec;
  with_seed.seed = seed;
  switch (spec.kind) {
    case ModelKind::ols_ct:
      return FittedModel(with_seed, X.cols(), ols_fit(X, y, spec.ct_truncate, spec.ct_slope_signs));
    case ModelKind::ridge: {
      std::vector<std::string> warnings;
      auto f = ridge_fit(X, y, spec.ridge_lambda, &warnings);
      return FittedModel(with_seed, X.cols(), std::move(f), std::move(warnings));
    }
    case ModelKind::random_forest:
      return FittedModel(with_seed, X.cols(), forest_fit(X, y, spec.forest, seed));
    case ModelKind::nn3:
      return FittedModel(with_seed, X.cols(), mlp_fit(X, y, spec.mlp, seed));
  }
  throw Error(ErrorCode::invalid_config, "unknown model kind");
}

inline FittedModel fit(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return fit(spec, X, y, spec.seed);
}

/// Classical inference for an OLS model on its fitting design. Residuals use
/// the unfloored linear predictor.
inline RegressionSummary ols_inference(const FittedModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (model.spec().kind != ModelKind::ols_ct)
    throw Error(ErrorCode::invalid_argument, "ols_inference requires an ols_ct model");
  return linear_inference(model.linear(), X, y);
}

}  // namespace factor_timing
