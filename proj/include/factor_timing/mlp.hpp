#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "factor_timing/error.hpp"
#include "factor_timing/linear.hpp"
#include "factor_timing/model_spec.hpp"
#include "factor_timing/rng.hpp"

namespace factor_timing {

/// Fully-connected ReLU network with a linear scalar output. All weights and
/// biases live in one flat parameter vector, layer by layer: W_l (row-major,
/// out x in) then b_l.
class Mlp {
 public:
  Mlp() = default;

  /// `widths` are the hidden layer sizes; the output layer has width 1.
  Mlp(int n_inputs, const std::vector<int>& widths) {
    sizes_.push_back(n_inputs);
    for (int w : widths) sizes_.push_back(w);
    sizes_.push_back(1);
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) total += sizes_[l + 1] * (sizes_[l] + 1);
    params_ = Eigen::VectorXd::Zero(total);
  }

  /// He-normal weights for ReLU layers, 1/fan_in variance for the linear
  /// output layer, zero biases.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    Eigen::Index off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const int in = sizes_[l], out = sizes_[l + 1];
      const bool output = (l + 2 == sizes_.size());
      const double sd = std::sqrt((output ? 1.0 : 2.0) / in);
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(out) * in; ++i) params_(off + i) = sd * rng.normal();
      off += static_cast<Eigen::Index>(out) * in;
      params_.segment(off, out).setZero();
      off += out;
    }
  }

  std::size_t n_layers() const noexcept { return sizes_.size() - 1; }
  const std::vector<int>& sizes() const noexcept { return sizes_; }
  Eigen::VectorXd& params() noexcept { return params_; }
  const Eigen::VectorXd& params() const noexcept { return params_; }

  /// Network outputs for each row of Z.
  Eigen::VectorXd forward(const Eigen::MatrixXd& Z) const { return forward_with(params_, Z); }

  Eigen::VectorXd forward_with(const Eigen::VectorXd& theta, const Eigen::MatrixXd& Z) const {
    Eigen::MatrixXd a = Z.transpose();  // features x rows
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < n_layers(); ++l) {
      auto [W, b] = layer(theta, l, off);
      Eigen::MatrixXd z = (W * a).colwise() + b;
      a = (l + 1 < n_layers()) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    return a.row(0).transpose();
  }

  /// Mean squared error of the network with parameters `theta`.
  double loss_with(const Eigen::VectorXd& theta, const Eigen::MatrixXd& Z, const Eigen::VectorXd& y) const {
    return (forward_with(theta, Z) - y).squaredNorm() / static_cast<double>(y.size());
  }
  double loss(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y) const { return loss_with(params_, Z, y); }

  /// Analytic gradient of the MSE loss by backpropagation.
  Eigen::VectorXd gradient(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double* loss_out = nullptr) const {
    const auto n = static_cast<double>(y.size());
    std::vector<Eigen::MatrixXd> acts{Z.transpose()};
    std::vector<Eigen::MatrixXd> pre;
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < n_layers(); ++l) {
      offsets.push_back(off);
      auto [W, b] = layer(params_, l, off);
      Eigen::MatrixXd z = (W * acts.back()).colwise() + b;
      pre.push_back(z);
      acts.push_back(l + 1 < n_layers() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
    }
    const Eigen::RowVectorXd resid = acts.back().row(0) - y.transpose();
    if (loss_out) *loss_out = resid.squaredNorm() / n;

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
    Eigen::MatrixXd delta = (2.0 / n) * resid;  // dL/dz for the output layer, 1 x rows
    for (std::size_t l = n_layers(); l-- > 0;) {
      const int in = sizes_[l], out = sizes_[l + 1];
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gW(
          grad.data() + offsets[l], out, in);
      gW = delta * acts[l].transpose();
      grad.segment(offsets[l] + static_cast<Eigen::Index>(out) * in, out) = delta.rowwise().sum();
      if (l > 0) {
        Eigen::Index o = offsets[l];
        auto [W, b] = layer(params_, l, o);
        delta = (W.transpose() * delta).cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
      }
    }
    return grad;
  }

 private:
  using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  std::pair<RowMajorMap, Eigen::Map<const Eigen::VectorXd>> layer(const Eigen::VectorXd& theta, std::size_t l,
                                                                  Eigen::Index& off) const {
    const int in = sizes_[l], out = sizes_[l + 1];
    RowMajorMap W(theta.data() + off, out, in);
    off += static_cast<Eigen::Index>(out) * in;
    Eigen::Map<const Eigen::VectorXd> b(theta.data() + off, out);
    off += out;
    return {W, b};
  }

  std::vector<int> sizes_;
  Eigen::VectorXd params_;
};

/// Trained network together with the input and target scalings of its
/// fitting sample.
struct MlpFit {
  Mlp net;
  Standardizer inputs;
  double target_mean = 0.0;
  double target_scale = 1.0;
  double initial_loss = 0.0;  // standardized-target MSE before the first update
  double final_loss = 0.0;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::MatrixXd z = inputs.transform_row(x).transpose();
    return target_mean + target_scale * net.forward(z)(0);
  }
};

/// Full-batch gradient descent on MSE. Inputs and the target are
/// standardized on the fitting sample.
inline MlpFit mlp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const MlpParams& params,
                      std::uint64_t seed) {
  check_finite(X, y);
  if (X.rows() < 2) throw Error(ErrorCode::too_few_rows, "nn3 needs at least 2 rows");
  MlpFit fit;
  fit.inputs = Standardizer::fit(X);
  fit.target_mean = y.mean();
  const double sd = stats::population_stdev(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
  // A constant target trains on zeros and predicts its mean exactly.
  fit.target_scale = sd > 0.0 ? sd : 0.0;

  const Eigen::MatrixXd Z = fit.inputs.transform(X);
  const Eigen::VectorXd t = (y.array() - fit.target_mean) / (sd > 0.0 ? sd : 1.0);
  fit.net = Mlp(static_cast<int>(X.cols()), params.layer_widths);
  fit.net.initialize(seed);

  double loss = 0.0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const Eigen::VectorXd g = fit.net.gradient(Z, t, &loss);
    if (epoch == 0) fit.initial_loss = loss;
    if (!std::isfinite(loss) || !g.allFinite())
      throw Error(ErrorCode::diverged_training, "non-finite loss at epoch " + std::to_string(epoch));
    fit.net.params() -= params.learning_rate * g;
  }
  fit.final_loss = fit.net.loss(Z, t);
  if (params.epochs == 0) fit.initial_loss = fit.final_loss;
  if (!std::isfinite(fit.final_loss))
    throw Error(ErrorCode::diverged_training, "non-finite loss after " + std::to_string(params.epochs) + " epochs");
  return fit;
}

}  // namespace factor_timing
