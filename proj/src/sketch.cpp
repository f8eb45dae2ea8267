#include "ntkpinn/sketch.hpp"

#include <cmath>

#include "ntkpinn/error.hpp"
#include "ntkpinn/rng.hpp"

namespace ntkpinn {

void SketchConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("sketch dt must be positive");
  if (!(mask_threshold >= 0.0)) throw ConfigError("sketch mask threshold must be nonnegative");
}

void AltTraceConfig::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("alternative trace eps must be positive");
}

Eigen::VectorXd sketch_matvec(const ResidualSystem& system, std::span<const double> theta,
                              const CollocationSet& pts, const Eigen::VectorXd& g, const SketchConfig& cfg,
                              const Eigen::VectorXd* cached_residual) {
  cfg.validate();
  if (static_cast<std::size_t>(g.size()) != pts.size()) {
    throw DimensionError("probe", pts.size(), static_cast<std::size_t>(g.size()));
  }
  const Eigen::VectorXd r0 = cached_residual ? *cached_residual : system.residual(theta, pts);
  if (r0.size() != g.size()) throw DimensionError("cached residual", pts.size(), static_cast<std::size_t>(r0.size()));

  Eigen::VectorXd masked = g;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (std::abs(r0(i)) <= cfg.mask_threshold) masked(i) = 0.0;
  }
  if (masked.isZero(0.0)) return Eigen::VectorXd::Zero(g.size());

  const Eigen::VectorXd step = system.jacobian_times(theta, pts, std::span<const double>(masked.data(), pts.size()));
  Eigen::VectorXd shifted(static_cast<Eigen::Index>(theta.size()));
  for (std::size_t j = 0; j < theta.size(); ++j) {
    shifted(static_cast<Eigen::Index>(j)) = theta[j] + cfg.dt * step(static_cast<Eigen::Index>(j));
  }
  const Eigen::VectorXd r1 = system.residual(std::span<const double>(shifted.data(), theta.size()), pts);
  return (r1 - r0) / cfg.dt;
}

Eigen::VectorXd draw_probe(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, streams::kSketch);
  Eigen::VectorXd g(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.normal();
  return g;
}

namespace {

std::vector<double> probe_group_traces(const GroupLayout& layout, const Eigen::VectorXd& g, const Eigen::VectorXd& m) {
  std::vector<double> out;
  for (std::size_t k = 0; k < layout.num_groups(); ++k) {
    const auto off = static_cast<Eigen::Index>(layout.offset(k));
    const auto cnt = static_cast<Eigen::Index>(layout.count(k));
    out.push_back(g.segment(off, cnt).dot(m.segment(off, cnt)));
  }
  return out;
}

}  // namespace

SketchSample single_sample_sketch(const ResidualSystem& system, std::span<const double> theta,
                                  const CollocationSet& pts, const SketchConfig& cfg, std::uint64_t seed,
                                  const Eigen::VectorXd* cached_residual, bool form_matrix) {
  SketchSample s;
  s.probe = draw_probe(pts.size(), seed);
  s.matvec = sketch_matvec(system, theta, pts, s.probe, cfg, cached_residual);
  s.trace = s.probe.dot(s.matvec);
  s.group_traces = probe_group_traces(pts.layout, s.probe, s.matvec);
  s.k_hat.layout = pts.layout;
  if (form_matrix) {
    const Eigen::MatrixXd tilde = s.matvec * s.probe.transpose();
    s.k_hat.values = 0.5 * (tilde + tilde.transpose());
  }
  return s;
}

NtkMatrix clip_nonnegative(const NtkMatrix& k) { return {k.values.cwiseMax(0.0), k.layout}; }

namespace {

struct PartialSum {
  Eigen::MatrixXd matrix;
  double trace = 0.0;
  std::vector<double> group_traces;
};

void add_into(PartialSum& a, const PartialSum& b) {
  if (b.matrix.size() != 0) a.matrix += b.matrix;
  a.trace += b.trace;
  for (std::size_t g = 0; g < a.group_traces.size(); ++g) a.group_traces[g] += b.group_traces[g];
}

// Sum of samples [lo, hi) by recursive halving.
PartialSum pairwise_sum(const ResidualSystem& system, std::span<const double> theta, const CollocationSet& pts,
                        const SketchConfig& cfg, std::uint64_t seed, const Eigen::VectorXd& r0, bool form_matrix,
                        std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) {
    SketchSample s = single_sample_sketch(system, theta, pts, cfg, stream_seed(seed, lo), &r0, form_matrix);
    return {std::move(s.k_hat.values), s.trace, std::move(s.group_traces)};
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  PartialSum left = pairwise_sum(system, theta, pts, cfg, seed, r0, form_matrix, lo, mid);
  add_into(left, pairwise_sum(system, theta, pts, cfg, seed, r0, form_matrix, mid, hi));
  return left;
}

}  // namespace

MonteCarloEstimate monte_carlo_average(const ResidualSystem& system, std::span<const double> theta,
                                       const CollocationSet& pts, const SketchConfig& cfg, std::size_t n_samples,
                                       std::uint64_t seed, bool form_matrix) {
  if (n_samples == 0) throw ConfigError("Monte Carlo average needs at least one sample");
  const Eigen::VectorXd r0 = system.residual(theta, pts);
  PartialSum sum = pairwise_sum(system, theta, pts, cfg, seed, r0, form_matrix, 0, n_samples);
  const double inv = 1.0 / static_cast<double>(n_samples);
  MonteCarloEstimate est;
  est.mean.layout = pts.layout;
  if (form_matrix) est.mean.values = sum.matrix * inv;
  est.trace = sum.trace * inv;
  for (double t : sum.group_traces) est.group_traces.push_back(t * inv);
  return est;
}

SketchAccumulator::SketchAccumulator(AccumulatorMode mode, double alpha, GroupLayout layout)
    : mode_(mode), alpha_(alpha), layout_(std::move(layout)) {
  if (!(alpha_ > 0.0 && alpha_ <= 1.0)) throw ConfigError("moving-average alpha must lie in (0, 1]");
}

const NtkMatrix& SketchAccumulator::matrix() const {
  if (mode_ != AccumulatorMode::kFullMatrix) throw Error("traces-only accumulator holds no matrix");
  return estimate_;
}

std::vector<double> SketchAccumulator::group_traces() const {
  if (mode_ == AccumulatorMode::kFullMatrix && samples_ > 0) return block_traces(estimate_);
  return traces_;
}

void SketchAccumulator::reset(const MonteCarloEstimate& estimate, std::size_t count) {
  if (!(estimate.mean.layout == layout_)) throw LayoutMismatchError("initial estimate layout differs from accumulator");
  if (mode_ == AccumulatorMode::kFullMatrix) {
    if (estimate.mean.values.size() == 0) throw Error("full-matrix accumulator needs a matrix estimate");
    estimate_ = estimate.mean;
  } else {
    traces_ = estimate.group_traces;
  }
  samples_ = count;
}

void SketchAccumulator::update(const SketchSample& sample) {
  if (!(sample.k_hat.layout == layout_)) throw LayoutMismatchError("sketch sample layout differs from accumulator");
  if (samples_ == 0) throw Error("accumulator must be initialized before updates");
  if (mode_ == AccumulatorMode::kFullMatrix) {
    if (sample.k_hat.values.size() == 0) throw Error("full-matrix accumulator needs matrix samples");
    estimate_.values = (1.0 - alpha_) * estimate_.values + alpha_ * sample.k_hat.values;
  } else {
    for (std::size_t g = 0; g < traces_.size(); ++g) {
      traces_[g] = (1.0 - alpha_) * traces_[g] + alpha_ * sample.group_traces[g];
    }
  }
  ++samples_;
}

SketchAccumulator moving_average_init(const ResidualSystem& system, std::span<const double> theta,
                                      const CollocationSet& pts, const SketchConfig& cfg, std::size_t n_samples,
                                      double alpha, AccumulatorMode mode, std::uint64_t seed) {
  SketchAccumulator acc(mode, alpha, pts.layout);
  acc.reset(monte_carlo_average(system, theta, pts, cfg, n_samples, seed, mode == AccumulatorMode::kFullMatrix),
            n_samples);
  return acc;
}

SketchAccumulator moving_average_update(SketchAccumulator acc, const SketchSample& sample) {
  acc.update(sample);
  return acc;
}

LossWeights sketch_weights(const SketchAccumulator& acc, const LossWeights& fallback) {
  if (!acc.initialized()) throw Error("sketch weights requested from an empty accumulator");
  const auto traces = acc.group_traces();
  for (double t : traces) {
    if (!(t > 0.0) || !std::isfinite(t)) return fallback;
  }
  return trace_ratio_weights(acc.layout(), traces);
}

double alt_trace_estimate(const ResidualSystem& system, std::span<const double> theta, const CollocationSet& pts,
                          const AltTraceConfig& cfg, std::uint64_t seed, const Eigen::VectorXd* cached_residual) {
  cfg.validate();
  const Eigen::VectorXd r0 = cached_residual ? *cached_residual : system.residual(theta, pts);
  Rng rng(seed, streams::kAltTrace);
  std::vector<double> shifted(theta.begin(), theta.end());
  for (double& v : shifted) v += cfg.eps * rng.normal();
  const Eigen::VectorXd r1 = system.residual(shifted, pts);
  return ((r1 - r0) / cfg.eps).squaredNorm();
}

std::string_view to_string(AccumulatorMode mode) {
  return mode == AccumulatorMode::kFullMatrix ? "full" : "traces";
}

AccumulatorMode accumulator_mode_from_string(std::string_view name) {
  if (name == "full") return AccumulatorMode::kFullMatrix;
  if (name == "traces") return AccumulatorMode::kTracesOnly;
  throw ConfigError("unknown accumulator mode '" + std::string(name) + "'");
}

}  // namespace ntkpinn
