#pragma once

// Batched evaluation of a scalar-output tanh MLP together with its input
// gradient and pure second input derivatives, and reverse-mode parameter
// gradients of any linear functional of those quantities.
//
// This is the production path used by the residual systems. The
// ScalarGraph produced by compile() computes the same quantities one point
// at a time and serves as the reference implementation in tests and
// benchmarks.

#include <Eigen/Dense>
#include <cstddef>
#include <span>

#include "ntkpinn/model.hpp"

namespace ntkpinn {

/// Number of Taylor components carried per point: value, d first
/// derivatives, d pure second derivatives.
constexpr std::size_t jet_size(std::size_t input_dim) { return 1 + 2 * input_dim; }

/// Component index helpers for a jet over `d` inputs.
struct JetIndex {
  static constexpr std::size_t value() { return 0; }
  static constexpr std::size_t first(std::size_t k) { return 1 + k; }
  static constexpr std::size_t second(std::size_t k, std::size_t d) { return 1 + d + k; }
};

class TaylorMlp {
 public:
  explicit TaylorMlp(MlpConfig config);

  const MlpConfig& config() const noexcept { return config_; }
  std::size_t num_params() const noexcept { return layout_.size(); }
  std::size_t jet_size() const noexcept { return ntkpinn::jet_size(config_.input_dim); }

  /// Output jets for points stored column-wise (d x B). Result is J x B.
  Eigen::MatrixXd forward(std::span<const double> theta, const Eigen::MatrixXd& points) const;

  /// Gradient in theta of sum_{c,b} seeds(c, b) * jet(c, b).
  Eigen::VectorXd pullback(std::span<const double> theta, const Eigen::MatrixXd& points,
                           const Eigen::MatrixXd& seeds) const;

  /// Column k is pullback(theta, points, seeds[k]); the forward pass is shared.
  Eigen::MatrixXd pullback(std::span<const double> theta, const Eigen::MatrixXd& points,
                           std::span<const Eigen::MatrixXd> seeds) const;

  /// Column b is the gradient in theta of sum_c seeds(c, b) * jet(c, b).
  Eigen::MatrixXd per_point_gradients(std::span<const double> theta, const Eigen::MatrixXd& points,
                                      const Eigen::MatrixXd& seeds) const;

 private:
  struct Tape;
  void run_forward(std::span<const double> theta, const Eigen::MatrixXd& points, Tape& tape) const;
  void run_backward(std::span<const double> theta, const Eigen::MatrixXd& seeds, Tape& tape) const;

  MlpConfig config_;
  ParamLayout layout_;
};

}  // namespace ntkpinn
