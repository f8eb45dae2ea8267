#pragma once

// Randomized NTK estimates built from one Jacobian-vector product and one
// extra residual evaluation per probe.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ntkpinn/ntk.hpp"
#include "ntkpinn/residual_system.hpp"

namespace ntkpinn {

struct SketchConfig {
  double dt = 1e-4;              // predictor step
  double mask_threshold = 1e-12;  // residual entries with |R_i| <= this are masked
  void validate() const;          // throws ConfigError
};

struct SketchSample {
  NtkMatrix k_hat;                   // (K~ + K~^T)/2; empty values when only traces were requested
  double trace = 0.0;                // g^T (K g)
  std::vector<double> group_traces;  // sum over i in group of g_i (K g)_i
  Eigen::VectorXd probe;
  Eigen::VectorXd matvec;
};

/// Finite-difference approximation of K g:
///   theta^ = theta + dt * grad R(theta) (g . mask),  return (R(theta^) - R(theta)) / dt
/// where the mask drops entries with |R_i| <= mask_threshold. Pass the cached
/// R(theta) to avoid recomputing it; then the call costs one Jacobian-vector
/// product and one residual evaluation.
Eigen::VectorXd sketch_matvec(const ResidualSystem& system, std::span<const double> theta,
                              const CollocationSet& pts, const Eigen::VectorXd& g, const SketchConfig& cfg,
                              const Eigen::VectorXd* cached_residual = nullptr);

/// Probe g ~ N(0, I_n) drawn from stream kSketch of `seed`.
Eigen::VectorXd draw_probe(std::size_t n, std::uint64_t seed);

/// One sketch sample with a probe drawn from `seed`. With `form_matrix` false
/// only the traces are filled in.
SketchSample single_sample_sketch(const ResidualSystem& system, std::span<const double> theta,
                                  const CollocationSet& pts, const SketchConfig& cfg, std::uint64_t seed,
                                  const Eigen::VectorXd* cached_residual = nullptr, bool form_matrix = true);

/// Entrywise max(K, 0).
NtkMatrix clip_nonnegative(const NtkMatrix& k);

struct MonteCarloEstimate {
  NtkMatrix mean;
  double trace = 0.0;
  std::vector<double> group_traces;
};

/// Mean of N independent samples; sample j uses seed stream_seed(seed, j).
/// Sums are accumulated pairwise in a fixed tree, so the result is
/// reproducible bit for bit.
MonteCarloEstimate monte_carlo_average(const ResidualSystem& system, std::span<const double> theta,
                                       const CollocationSet& pts, const SketchConfig& cfg, std::size_t n_samples,
                                       std::uint64_t seed, bool form_matrix = true);

enum class AccumulatorMode { kFullMatrix, kTracesOnly };

std::string_view to_string(AccumulatorMode mode);
AccumulatorMode accumulator_mode_from_string(std::string_view name);  // throws ConfigError

/// Exponential moving average of sketch samples.
class SketchAccumulator {
 public:
  SketchAccumulator(AccumulatorMode mode, double alpha, GroupLayout layout);

  AccumulatorMode mode() const noexcept { return mode_; }
  double alpha() const noexcept { return alpha_; }
  const GroupLayout& layout() const noexcept { return layout_; }
  std::size_t samples() const noexcept { return samples_; }
  bool initialized() const noexcept { return samples_ > 0; }

  /// Current estimate; full-matrix mode only (throws Error otherwise).
  const NtkMatrix& matrix() const;
  /// Per-group trace estimates (exactly one scalar per group).
  std::vector<double> group_traces() const;

  /// Replaces the state with an initial estimate counting `count` samples.
  void reset(const MonteCarloEstimate& estimate, std::size_t count);
  /// state <- (1 - alpha) state + alpha sample. Throws LayoutMismatchError.
  void update(const SketchSample& sample);

 private:
  AccumulatorMode mode_;
  double alpha_;
  GroupLayout layout_;
  NtkMatrix estimate_;
  std::vector<double> traces_;
  std::size_t samples_ = 0;
};

SketchAccumulator moving_average_init(const ResidualSystem& system, std::span<const double> theta,
                                      const CollocationSet& pts, const SketchConfig& cfg, std::size_t n_samples,
                                      double alpha, AccumulatorMode mode, std::uint64_t seed);

SketchAccumulator moving_average_update(SketchAccumulator acc, const SketchSample& sample);

/// Trace-ratio weights from the estimated block traces; `fallback` when any
/// estimated trace is nonpositive.
LossWeights sketch_weights(const SketchAccumulator& acc, const LossWeights& fallback);

struct AltTraceConfig {
  double eps = 1e-4;
  void validate() const;  // throws ConfigError
};

/// ||(R(theta + h) - R(theta)) / eps||^2 with a parameter-space probe
/// h ~ N(0, eps^2 I_p) drawn from stream kAltTrace of `seed`.
double alt_trace_estimate(const ResidualSystem& system, std::span<const double> theta, const CollocationSet& pts,
                          const AltTraceConfig& cfg, std::uint64_t seed,
                          const Eigen::VectorXd* cached_residual = nullptr);

}  // namespace ntkpinn
