#include "ntkpinn/residual_system.hpp"

#include <cmath>
#include <vector>

#include "ntkpinn/autodiff.hpp"
#include "ntkpinn/error.hpp"

namespace ntkpinn {

namespace {

std::size_t num_chunks(std::size_t n, std::size_t chunk) { return (n + chunk - 1) / chunk; }

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

void check_theta(const ResidualSystem& system, std::span<const double> theta) {
  if (theta.size() != system.num_params()) throw DimensionError("params", system.num_params(), theta.size());
}

}  // namespace

Eigen::MatrixXd ResidualSystem::jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                               const Eigen::MatrixXd& v) const {
  Eigen::MatrixXd out(idx(num_params()), v.cols());
  for (Eigen::Index k = 0; k < v.cols(); ++k) {
    const Eigen::VectorXd col = v.col(k);
    out.col(k) = jacobian_times(theta, pts, std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
  }
  return out;
}

// ---------------------------------------------------------------------------
// PinnSystem

PinnSystem::PinnSystem(ProblemSpec spec, MlpConfig config) : spec_(std::move(spec)), kernel_(std::move(config)) {
  if (spec_.kind == ProblemKind::kQuadraticRegression) throw ConfigError("PinnSystem needs a PDE problem");
  if (kernel_.config().input_dim != spec_.input_dim) {
    throw DimensionError("model input_dim", spec_.input_dim, kernel_.config().input_dim);
  }
}

void PinnSystem::operators(const CollocationSet& pts, Eigen::MatrixXd& coeffs, Eigen::VectorXd& targets) const {
  if (pts.input_dim() != spec_.input_dim) throw DimensionError("collocation inputs", spec_.input_dim, pts.input_dim());
  const std::size_t n = pts.size();
  const std::size_t jets = kernel_.jet_size();
  coeffs.resize(idx(jets), idx(n));
  targets.resize(idx(n));
  for (std::size_t g = 0; g < pts.layout.num_groups(); ++g) {
    const GroupSchema& schema = spec_.schema(pts.layout.groups()[g].name);
    const Eigen::Map<const Eigen::VectorXd> c(schema.jet_coeffs.data(), idx(jets));
    for (std::size_t i = 0; i < pts.layout.count(g); ++i) {
      const std::size_t col = pts.layout.offset(g) + i;
      coeffs.col(idx(col)) = c;
      const Eigen::VectorXd p = pts.points.col(idx(col));
      targets(idx(col)) = schema.target(std::span<const double>(p.data(), spec_.input_dim));
    }
  }
}

Eigen::VectorXd PinnSystem::residual(std::span<const double> theta, const CollocationSet& pts) const {
  check_theta(*this, theta);
  Eigen::MatrixXd coeffs;
  Eigen::VectorXd targets;
  operators(pts, coeffs, targets);
  const std::size_t n = pts.size();
  Eigen::VectorXd r(idx(n));
  const long chunks = static_cast<long>(num_chunks(n, kChunk));
#pragma omp parallel for schedule(static)
  for (long c = 0; c < chunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t len = std::min(kChunk, n - begin);
    const Eigen::MatrixXd jets = kernel_.forward(theta, pts.points.middleCols(idx(begin), idx(len)));
    r.segment(idx(begin), idx(len)) =
        (coeffs.middleCols(idx(begin), idx(len)).cwiseProduct(jets)).colwise().sum().transpose() -
        targets.segment(idx(begin), idx(len));
  }
  ++counters_.residuals;
  return r;
}

Eigen::VectorXd PinnSystem::jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                           std::span<const double> v) const {
  check_theta(*this, theta);
  if (v.size() != pts.size()) throw DimensionError("residual-space vector", pts.size(), v.size());
  Eigen::MatrixXd coeffs;
  Eigen::VectorXd targets;
  operators(pts, coeffs, targets);
  const std::size_t n = pts.size();
  const Eigen::Map<const Eigen::VectorXd> weights(v.data(), idx(n));
  const std::size_t chunks = num_chunks(n, kChunk);
  std::vector<Eigen::VectorXd> partial(chunks);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < static_cast<long>(chunks); ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t len = std::min(kChunk, n - begin);
    const Eigen::MatrixXd seeds = coeffs.middleCols(idx(begin), idx(len)) *
                                  weights.segment(idx(begin), idx(len)).asDiagonal();
    partial[static_cast<std::size_t>(c)] =
        kernel_.pullback(theta, pts.points.middleCols(idx(begin), idx(len)), seeds);
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(idx(num_params()));
  for (const auto& p : partial) out += p;
  ++counters_.jacobian_products;
  return out;
}

Eigen::MatrixXd PinnSystem::jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                           const Eigen::MatrixXd& v) const {
  check_theta(*this, theta);
  if (static_cast<std::size_t>(v.rows()) != pts.size()) {
    throw DimensionError("residual-space vector", pts.size(), static_cast<std::size_t>(v.rows()));
  }
  Eigen::MatrixXd coeffs;
  Eigen::VectorXd targets;
  operators(pts, coeffs, targets);
  const std::size_t n = pts.size();
  const std::size_t chunks = num_chunks(n, kChunk);
  std::vector<Eigen::MatrixXd> partial(chunks);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < static_cast<long>(chunks); ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t len = std::min(kChunk, n - begin);
    std::vector<Eigen::MatrixXd> seeds;
    for (Eigen::Index k = 0; k < v.cols(); ++k) {
      seeds.push_back(coeffs.middleCols(idx(begin), idx(len)) * v.col(k).segment(idx(begin), idx(len)).asDiagonal());
    }
    partial[static_cast<std::size_t>(c)] =
        kernel_.pullback(theta, pts.points.middleCols(idx(begin), idx(len)), std::span<const Eigen::MatrixXd>(seeds));
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(idx(num_params()), v.cols());
  for (const auto& p : partial) out += p;
  counters_.jacobian_products += static_cast<std::size_t>(v.cols());
  return out;
}

Eigen::MatrixXd PinnSystem::jacobian(std::span<const double> theta, const CollocationSet& pts) const {
  check_theta(*this, theta);
  Eigen::MatrixXd coeffs;
  Eigen::VectorXd targets;
  operators(pts, coeffs, targets);
  const std::size_t n = pts.size();
  Eigen::MatrixXd jac(idx(num_params()), idx(n));
  const long chunks = static_cast<long>(num_chunks(n, kChunk));
#pragma omp parallel for schedule(static)
  for (long c = 0; c < chunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t len = std::min(kChunk, n - begin);
    jac.middleCols(idx(begin), idx(len)) = kernel_.per_point_gradients(
        theta, pts.points.middleCols(idx(begin), idx(len)), coeffs.middleCols(idx(begin), idx(len)));
  }
  ++counters_.jacobians;
  return jac;
}

Eigen::VectorXd PinnSystem::predict(std::span<const double> theta, const Eigen::MatrixXd& points) const {
  check_theta(*this, theta);
  const std::size_t n = static_cast<std::size_t>(points.cols());
  Eigen::VectorXd out(idx(n));
  const long chunks = static_cast<long>(num_chunks(n, kChunk));
#pragma omp parallel for schedule(static)
  for (long c = 0; c < chunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t len = std::min(kChunk, n - begin);
    out.segment(idx(begin), idx(len)) = kernel_.forward(theta, points.middleCols(idx(begin), idx(len))).row(0).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// QuadraticRegressionSystem

namespace {

Eigen::Vector3d features(double x) { return {1.0, x, x * x}; }

void check_regression_points(const ProblemSpec& spec, const CollocationSet& pts) {
  if (pts.size() != spec.data.y.size()) throw DimensionError("regression points", spec.data.y.size(), pts.size());
}

}  // namespace

QuadraticRegressionSystem::QuadraticRegressionSystem(ProblemSpec spec) : spec_(std::move(spec)) {
  if (spec_.kind != ProblemKind::kQuadraticRegression) throw ConfigError("QuadraticRegressionSystem needs regression data");
}

Eigen::VectorXd QuadraticRegressionSystem::residual(std::span<const double> theta, const CollocationSet& pts) const {
  check_theta(*this, theta);
  check_regression_points(spec_, pts);
  const Eigen::Vector3d sq(theta[0] * theta[0], theta[1] * theta[1], theta[2] * theta[2]);
  Eigen::VectorXd r(idx(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    r(idx(i)) = sq.dot(features(pts.points(0, idx(i)))) - spec_.data.y[i];
  }
  ++counters_.residuals;
  return r;
}

Eigen::MatrixXd QuadraticRegressionSystem::jacobian(std::span<const double> theta, const CollocationSet& pts) const {
  check_theta(*this, theta);
  check_regression_points(spec_, pts);
  Eigen::MatrixXd jac(3, idx(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Eigen::Vector3d u = features(pts.points(0, idx(i)));
    for (Eigen::Index j = 0; j < 3; ++j) jac(j, idx(i)) = 2.0 * theta[static_cast<std::size_t>(j)] * u(j);
  }
  ++counters_.jacobians;
  return jac;
}

Eigen::VectorXd QuadraticRegressionSystem::jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                                          std::span<const double> v) const {
  check_theta(*this, theta);
  check_regression_points(spec_, pts);
  if (v.size() != pts.size()) throw DimensionError("residual-space vector", pts.size(), v.size());
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) out += v[i] * features(pts.points(0, idx(i)));
  for (Eigen::Index j = 0; j < 3; ++j) out(j) *= 2.0 * theta[static_cast<std::size_t>(j)];
  ++counters_.jacobian_products;
  return out;
}

Eigen::VectorXd QuadraticRegressionSystem::predict(std::span<const double> theta, const Eigen::MatrixXd& points) const {
  check_theta(*this, theta);
  const Eigen::Vector3d sq(theta[0] * theta[0], theta[1] * theta[1], theta[2] * theta[2]);
  Eigen::VectorXd out(points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) out(i) = sq.dot(features(points(0, i)));
  return out;
}

// ---------------------------------------------------------------------------
// LinearResidualSystem

LinearResidualSystem::LinearResidualSystem(Eigen::MatrixXd a, Eigen::VectorXd b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.cols() != b_.size()) {
    throw DimensionError("linear residual offset", static_cast<std::size_t>(a_.cols()), static_cast<std::size_t>(b_.size()));
  }
}

LinearResidualSystem LinearResidualSystem::frozen_quadratic(const ProblemSpec& regression) {
  const std::size_t n = regression.data.x.size();
  Eigen::MatrixXd a(3, idx(n));
  Eigen::VectorXd b(idx(n));
  for (std::size_t i = 0; i < n; ++i) {
    a.col(idx(i)) = features(regression.data.x[i]);
    b(idx(i)) = regression.data.y[i];
  }
  return LinearResidualSystem(std::move(a), std::move(b));
}

Eigen::VectorXd LinearResidualSystem::residual(std::span<const double> theta, const CollocationSet& pts) const {
  check_theta(*this, theta);
  if (pts.size() != static_cast<std::size_t>(b_.size())) {
    throw DimensionError("linear residual points", static_cast<std::size_t>(b_.size()), pts.size());
  }
  const Eigen::Map<const Eigen::VectorXd> t(theta.data(), a_.rows());
  ++counters_.residuals;
  return a_.transpose() * t - b_;
}

Eigen::MatrixXd LinearResidualSystem::jacobian(std::span<const double> theta, const CollocationSet& pts) const {
  check_theta(*this, theta);
  if (pts.size() != static_cast<std::size_t>(b_.size())) {
    throw DimensionError("linear residual points", static_cast<std::size_t>(b_.size()), pts.size());
  }
  ++counters_.jacobians;
  return a_;
}

Eigen::VectorXd LinearResidualSystem::jacobian_times(std::span<const double> theta, const CollocationSet& pts,
                                                     std::span<const double> v) const {
  check_theta(*this, theta);
  if (v.size() != pts.size() || pts.size() != static_cast<std::size_t>(b_.size())) {
    throw DimensionError("residual-space vector", static_cast<std::size_t>(b_.size()), v.size());
  }
  ++counters_.jacobian_products;
  return a_ * Eigen::Map<const Eigen::VectorXd>(v.data(), idx(v.size()));
}

Eigen::VectorXd LinearResidualSystem::predict(std::span<const double> theta, const Eigen::MatrixXd& points) const {
  check_theta(*this, theta);
  // Prediction is only meaningful for the frozen-feature regression model.
  Eigen::VectorXd out(points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    out(i) = a_.rows() == 3 ? Eigen::Map<const Eigen::Vector3d>(theta.data()).dot(features(points(0, i))) : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<ResidualSystem> make_system(const ProblemSpec& spec, const MlpConfig* config) {
  if (spec.kind == ProblemKind::kQuadraticRegression) return std::make_unique<QuadraticRegressionSystem>(spec);
  if (config == nullptr) throw ConfigError("PDE problems need a model configuration");
  return std::make_unique<PinnSystem>(spec, *config);
}

Eigen::VectorXd assemble_residual(const ResidualSystem& system, const ParamVector& theta, const CollocationSet& pts) {
  return system.residual(theta.span(), pts);
}

Eigen::MatrixXd residual_jacobian(const ResidualSystem& system, const ParamVector& theta, const CollocationSet& pts) {
  return system.jacobian(theta.span(), pts);
}

double exact_solution_error(const ProblemSpec& spec, const ResidualSystem& system, std::span<const double> theta,
                            const Eigen::MatrixXd& grid) {
  if (grid.cols() == 0) throw Error("exact_solution_error: empty evaluation grid");
  const Eigen::VectorXd pred = system.predict(theta, grid);
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < grid.cols(); ++i) {
    const Eigen::VectorXd p = grid.col(i);
    const double u = spec.exact(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
    num += (pred(i) - u) * (pred(i) - u);
    den += u * u;
  }
  return std::sqrt(num / den);
}

// ---------------------------------------------------------------------------
// Reference path through ScalarGraph.

namespace {

ad::DerivativeRequest request_for(std::size_t component, std::size_t d) {
  if (component == 0) return ad::DerivativeRequest::value();
  if (component <= d) return ad::DerivativeRequest::first(component - 1);
  const std::size_t k = component - 1 - d;
  return ad::DerivativeRequest::second(k, k);
}

}  // namespace

Eigen::VectorXd reference_residual(const PinnSystem& system, std::span<const double> theta, const CollocationSet& pts) {
  const auto graphs = compile(system.config());
  const std::size_t d = system.spec().input_dim;
  ad::Workspace ws;
  Eigen::VectorXd r(idx(pts.size()));
  for (std::size_t g = 0; g < pts.layout.num_groups(); ++g) {
    const GroupSchema& schema = system.spec().schema(pts.layout.groups()[g].name);
    for (std::size_t i = 0; i < pts.layout.count(g); ++i) {
      const std::size_t col = pts.layout.offset(g) + i;
      const Eigen::VectorXd p = pts.points.col(idx(col));
      const std::span<const double> x(p.data(), d);
      double value = -schema.target(x);
      for (std::size_t c = 0; c < schema.jet_coeffs.size(); ++c) {
        if (schema.jet_coeffs[c] == 0.0) continue;
        value += schema.jet_coeffs[c] * ad::input_derivative(graphs[0], x, theta, request_for(c, d), ws);
      }
      r(idx(col)) = value;
    }
  }
  return r;
}

Eigen::MatrixXd reference_jacobian(const PinnSystem& system, std::span<const double> theta, const CollocationSet& pts) {
  const auto graphs = compile(system.config());
  const std::size_t d = system.spec().input_dim;
  ad::Workspace ws;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(idx(system.num_params()), idx(pts.size()));
  for (std::size_t g = 0; g < pts.layout.num_groups(); ++g) {
    const GroupSchema& schema = system.spec().schema(pts.layout.groups()[g].name);
    for (std::size_t i = 0; i < pts.layout.count(g); ++i) {
      const std::size_t col = pts.layout.offset(g) + i;
      const Eigen::VectorXd p = pts.points.col(idx(col));
      const std::span<const double> x(p.data(), d);
      for (std::size_t c = 0; c < schema.jet_coeffs.size(); ++c) {
        if (schema.jet_coeffs[c] == 0.0) continue;
        const auto grad = ad::parameter_gradient(graphs[0], x, theta, request_for(c, d), ws);
        jac.col(idx(col)) += schema.jet_coeffs[c] * Eigen::Map<const Eigen::VectorXd>(grad.data(), idx(grad.size()));
      }
    }
  }
  return jac;
}

}  // namespace ntkpinn
