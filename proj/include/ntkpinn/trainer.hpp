#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ntkpinn/model.hpp"
#include "ntkpinn/ntk.hpp"
#include "ntkpinn/problems.hpp"
#include "ntkpinn/residual_system.hpp"
#include "ntkpinn/sketch.hpp"

namespace ntkpinn {

enum class WeightMode { kFixed, kExactNtk, kSketch };

std::string_view to_string(WeightMode mode);
WeightMode weight_mode_from_string(std::string_view name);  // throws ConfigError

/// Spaced weight updates with budget h(t) = c (1 + t)^q. A coefficient of
/// zero means "10 times the first positive increment".
struct SpacedUpdateConfig {
  double c = 0.0;
  double q = 0.5;
};

struct TrainConfig {
  double eta = 1e-4;
  std::size_t steps = 1000;
  WeightMode mode = WeightMode::kFixed;
  std::size_t update_every = 1;  // exact mode: recompute weights every this many steps
  std::optional<SpacedUpdateConfig> spaced;
  bool resample = false;  // fresh collocation points every step
  std::uint64_t seed = 0;

  // Sketch mode.
  SketchConfig sketch;
  std::size_t sketch_init_samples = 1;
  double alpha = 1e-3;
  AccumulatorMode accumulator = AccumulatorMode::kFullMatrix;  // forced to traces-only when resampling

  // Weights for fixed mode and the fallback for degenerate estimates; empty
  // means all ones.
  std::vector<double> initial_weights;

  // Diagnostics.
  bool record_eigenvalues = false;
  std::size_t eig_every = 0;          // 0: every step when n <= 16, else every 10th
  std::size_t exact_trace_every = 0;  // sketch mode: exact block traces every k steps (0 = off)
  std::size_t snapshot_every = 0;     // store theta every k steps (0 = off)
  bool record_wall_time = false;      // otherwise wall_ms is written as 0

  void validate() const;  // throws ConfigError
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double res_norm_sq = 0.0;
  double grad_g_norm_sq = 0.0;
  double grad_f_norm_sq = 0.0;
  std::vector<double> weights;
  std::vector<double> eigenvalues;  // empty when not recorded this step
  double wall_ms = 0.0;
};

struct ExactTraceRecord {
  std::size_t step = 0;
  std::vector<double> traces;
  std::vector<double> weights;
  std::vector<double> estimated_weights;
};

struct Snapshot {
  std::size_t step = 0;
  std::vector<double> theta;
};

struct TrainingTrace {
  std::vector<std::string> group_names;
  std::vector<StepRecord> records;  // steps 0..T
  std::vector<ExactTraceRecord> exact_traces;
  std::vector<Snapshot> snapshots;
  ParamVector final_theta;
  double spaced_sum = 0.0;
  std::size_t spaced_accepts = 0;
  std::optional<SketchAccumulator> accumulator;  // sketch mode: final state
};

/// 1/2 sum_g lambda_g sum_{i in g} R_i^2. Throws LayoutMismatchError.
double weighted_loss(const Eigen::VectorXd& r, const LossWeights& w, const GroupLayout& layout);

/// theta - eta J (Lambda R).
ParamVector gd_step(const ParamVector& theta, const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& r,
                    const LossWeights& w, const GroupLayout& layout, double eta);

struct SpacedUpdateState {
  double sum = 0.0;  // S
  LossWeights weights;
};

/// Accepts `candidate` when S + max(0, max_g(candidate_g - current_g)) ||R||^2
/// <= h, adding the increment to S. Negative increments are clamped to zero
/// so that S never decreases.
SpacedUpdateState spaced_update(const SpacedUpdateState& state, const LossWeights& candidate,
                                const Eigen::VectorXd& r_next, double h);
double spaced_increment(const LossWeights& current, const LossWeights& candidate, const Eigen::VectorXd& r_next);

/// Gradient descent from theta0 on collocation set `pts` (the first set when
/// resampling). `spec` provides the sampler for resampling.
TrainingTrace train(const ResidualSystem& system, const ProblemSpec& spec, const ParamVector& theta0,
                    const CollocationSet& pts, const TrainConfig& cfg);

/// Row t of the CSV is record t. Columns: step, loss, res_norm_sq,
/// gradG_norm_sq, gradF_norm_sq, w_<group>..., eig_0..eig_{n-1} (when any
/// record holds eigenvalues), wall_ms.
void write_trace_csv(std::ostream& out, const TrainingTrace& trace);

/// (1/T') sum_{t<T'} ||R(theta_t)||^2. Throws Error for T' = 0 or T' too long.
double time_averaged_residuals(const TrainingTrace& trace, std::size_t t_prime);
/// (1/T') sum_{t<T'} ||grad_theta G(theta_t; theta_t)||^2.
double time_averaged_gradients(const TrainingTrace& trace, std::size_t t_prime);

struct CertificateEntry {
  std::size_t t = 0;
  double average = 0.0;  // (1/T) sum_{t<T} ||R_t||^2
  double bound = 0.0;    // (||R_0||^2 - ||R_T||^2) / (T eta)
  bool holds = false;
};

/// Residual-average bound checked at every T in [t_begin, t_end] (clamped
/// to the trace length; t_begin >= 1).
std::vector<CertificateEntry> theorem32_certificate(const TrainingTrace& trace, double eta, std::size_t t_begin = 1,
                                                    std::size_t t_end = static_cast<std::size_t>(-1));

struct DescentLemmaReport {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double max_violation = 0.0;  // max of F(x) - F(y) - <grad F(y), x - y> - L/2 ||x - y||^2
};

using ScalarFunction = std::function<double(std::span<const double>)>;
using GradientFunction = std::function<Eigen::VectorXd(std::span<const double>)>;

/// Checks the descent inequality for every pair (x, y). A violation is a
/// positive gap larger than `tolerance` times the magnitude of the terms.
DescentLemmaReport descent_lemma_check(const ScalarFunction& f, const GradientFunction& grad,
                                       std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs,
                                       double lipschitz, double tolerance = 1e-12);
/// The same for F(theta) = 1/2 ||R(theta)||^2.
DescentLemmaReport descent_lemma_check(const ResidualSystem& system, const CollocationSet& pts,
                                       std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs,
                                       double lipschitz, double tolerance = 1e-12);

/// max ||grad F(a) - grad F(b)|| / ||a - b|| over consecutive snapshots.
double empirical_lipschitz(const ResidualSystem& system, const CollocationSet& pts,
                           std::span<const Snapshot> snapshots);

struct DiagnosticsRecord {
  double k_min = 0.0;
  double k_max = 0.0;
  double l_min = 0.0;
  double l_max = 0.0;
  double lipschitz = 0.0;
  double admissible_eta = 0.0;  // 2 k_min l_min / (L k_max l_max^2)
};

/// Extremes over the records in [t_begin, t_end] that hold eigenvalues.
/// Throws Error when no record holds eigenvalues.
DiagnosticsRecord assumption_diagnostics(const TrainingTrace& trace, double lipschitz, std::size_t t_begin = 0,
                                         std::size_t t_end = static_cast<std::size_t>(-1));

/// Least-squares slope of log y against log x.
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace ntkpinn
