#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <span>

#include "ntkpinn/mlp_kernel.hpp"
#include "ntkpinn/model.hpp"
#include "ntkpinn/problems.hpp"

namespace ntkpinn {

/// Number of expensive operations performed by a residual system. Used to
/// check cost contracts of the estimators.
struct OpCounters {
  std::size_t residuals = 0;          // R(theta) evaluations
  std::size_t jacobian_products = 0;  // grad R(theta) v products (one backward pass)
  std::size_t jacobians = 0;          // full p x n Jacobians
};

/// R: P -> R^n for a fixed problem. Not thread-safe with respect to the
/// operation counters; a system has a single owner per training run.
class ResidualSystem {
 public:
  virtual ~ResidualSystem() = default;

  virtual std::size_t num_params() const = 0;

  /// R(theta) in layout order.
  virtual Eigen::VectorXd residual(std::span<const double> theta, const CollocationSet& pts) const = 0;

  /// grad R(theta), p x n; column i is the gradient of R_i.
  virtual Eigen::MatrixXd jacobian(std::span<const double> theta, const CollocationSet& pts) const = 0;

  /// grad R(theta) v, a p-vector.
  virtual Eigen::VectorXd jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                         std::span<const double> v) const = 0;

  /// grad R(theta) V for an n x k matrix V, p x k. Counts k Jacobian
  /// products; implementations may share the forward pass between columns.
  virtual Eigen::MatrixXd jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                         const Eigen::MatrixXd& v) const;

  /// Model prediction (u_theta for PDEs, the fitted curve for regression) at
  /// points stored column-wise.
  virtual Eigen::VectorXd predict(std::span<const double> theta, const Eigen::MatrixXd& points) const = 0;

  const OpCounters& counters() const noexcept { return counters_; }
  void reset_counters() const noexcept { counters_ = {}; }

 protected:
  mutable OpCounters counters_;
};

/// PDE residuals of an MLP u_theta. Points are processed in fixed-size chunks
/// (in parallel when OpenMP is enabled) and reduced in chunk order, so
/// results do not depend on the number of threads.
class PinnSystem final : public ResidualSystem {
 public:
  static constexpr std::size_t kChunk = 64;

  PinnSystem(ProblemSpec spec, MlpConfig config);

  std::size_t num_params() const override { return kernel_.num_params(); }
  Eigen::VectorXd residual(std::span<const double> theta, const CollocationSet& pts) const override;
  Eigen::MatrixXd jacobian(std::span<const double> theta, const CollocationSet& pts) const override;
  Eigen::VectorXd jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                 std::span<const double> v) const override;
  Eigen::MatrixXd jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                 const Eigen::MatrixXd& v) const override;
  Eigen::VectorXd predict(std::span<const double> theta, const Eigen::MatrixXd& points) const override;

  const ProblemSpec& spec() const noexcept { return spec_; }
  const MlpConfig& config() const noexcept { return kernel_.config(); }

 private:
  // Jet coefficients per residual entry (J x n) and the target vector.
  void operators(const CollocationSet& pts, Eigen::MatrixXd& coeffs, Eigen::VectorXd& targets) const;

  ProblemSpec spec_;
  TaylorMlp kernel_;
};

/// R(theta)_i = (theta . theta) . u(x_i) - y_i with features u(x) = (1, x, x^2).
class QuadraticRegressionSystem final : public ResidualSystem {
 public:
  explicit QuadraticRegressionSystem(ProblemSpec spec);

  std::size_t num_params() const override { return 3; }
  Eigen::VectorXd residual(std::span<const double> theta, const CollocationSet& pts) const override;
  using ResidualSystem::jacobian_times;
  /// Closed form grad R(theta)_{ji} = 2 theta_j u(x_i)_j.
  Eigen::MatrixXd jacobian(std::span<const double> theta, const CollocationSet& pts) const override;
  Eigen::VectorXd jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                 std::span<const double> v) const override;
  Eigen::VectorXd predict(std::span<const double> theta, const Eigen::MatrixXd& points) const override;

  const ProblemSpec& spec() const noexcept { return spec_; }

 private:
  ProblemSpec spec_;
};

/// R(theta) = A^T theta - b with a constant p x n matrix A, so K = A^T A
/// exactly. Ignores the collocation points beyond their count.
class LinearResidualSystem final : public ResidualSystem {
 public:
  LinearResidualSystem(Eigen::MatrixXd a, Eigen::VectorXd b);

  /// The regression problem with features frozen as a linear model:
  /// R(theta)_i = theta . u(x_i) - y_i.
  static LinearResidualSystem frozen_quadratic(const ProblemSpec& regression);

  using ResidualSystem::jacobian_times;
  std::size_t num_params() const override { return static_cast<std::size_t>(a_.rows()); }
  Eigen::VectorXd residual(std::span<const double> theta, const CollocationSet& pts) const override;
  Eigen::MatrixXd jacobian(std::span<const double> theta, const CollocationSet& pts) const override;
  Eigen::VectorXd jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                 std::span<const double> v) const override;
  Eigen::VectorXd predict(std::span<const double> theta, const Eigen::MatrixXd& points) const override;

  const Eigen::MatrixXd& matrix() const noexcept { return a_; }

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
};

/// Residual system for a problem: an MLP-backed PinnSystem for PDE problems
/// (config required), QuadraticRegressionSystem for regression.
std::unique_ptr<ResidualSystem> make_system(const ProblemSpec& spec, const MlpConfig* config);

/// Thin wrappers matching the problem-level operations.
Eigen::VectorXd assemble_residual(const ResidualSystem& system, const ParamVector& theta,
                                  const CollocationSet& pts);
Eigen::MatrixXd residual_jacobian(const ResidualSystem& system, const ParamVector& theta,
                                  const CollocationSet& pts);

/// sqrt(sum |u_theta - u|^2 / sum |u|^2) over the grid (points column-wise).
double exact_solution_error(const ProblemSpec& spec, const ResidualSystem& system,
                            std::span<const double> theta, const Eigen::MatrixXd& grid);

/// Serial reference residuals computed through ScalarGraph evaluation, one
/// derivative request per jet component. Used to validate PinnSystem.
Eigen::VectorXd reference_residual(const PinnSystem& system, std::span<const double> theta,
                                   const CollocationSet& pts);
Eigen::MatrixXd reference_jacobian(const PinnSystem& system, std::span<const double> theta,
                                   const CollocationSet& pts);

}  // namespace ntkpinn
