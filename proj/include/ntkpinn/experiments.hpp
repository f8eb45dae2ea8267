#pragma once

// The three reference experiments. Each run_* function computes results in
// memory; write_* emits the CSV/JSON artifacts. Every artifact starts with a
// '#' comment line carrying the experiment name, config hash, seed and RNG
// algorithm.

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ntkpinn/config.hpp"
#include "ntkpinn/ntk.hpp"
#include "ntkpinn/problems.hpp"
#include "ntkpinn/residual_system.hpp"
#include "ntkpinn/sketch.hpp"
#include "ntkpinn/trainer.hpp"

namespace ntkpinn {

/// Problem, residual system, initial parameters and first collocation set
/// for a configuration.
struct ExperimentSetup {
  ProblemSpec spec;
  std::unique_ptr<ResidualSystem> system;
  ParamVector theta0;
  CollocationSet points;
  TrainConfig train;  // cfg.train with the seed filled in
};

ExperimentSetup make_setup(const ExperimentConfig& cfg);

std::string artifact_header(const ExperimentConfig& cfg);

/// First step s such that every weight stays within `tolerance` (relative)
/// of its final value for all t >= s.
std::size_t stabilization_step(const TrainingTrace& trace, double tolerance = 0.1);

/// Log-log slope of the running average (1/T) sum_{t<T} field over
/// T in [t_begin, t_end].
double running_average_slope(const TrainingTrace& trace, std::size_t t_begin, std::size_t t_end, bool gradients);

struct PoissonResult {
  TrainingTrace trace;
  double final_loss = 0.0;
  double lipschitz = 0.0;  // empirical, from the stored snapshots
  DiagnosticsRecord diagnostics;
  std::size_t stabilized_step = 0;
  double residual_slope = 0.0;
  double gradient_slope = 0.0;
  double eigen_monotone_fraction = 0.0;  // sorted spectra nondecreasing, over stabilized steps
  double final_ratio_spread = 0.0;       // max/min of each weight over the final 20% of steps (worst group)
  bool main_certificate_holds = false;   // the same inequality on the main run (eta not admissible)

  double certificate_eta = 0.0;
  std::optional<TrainingTrace> certificate_trace;
  std::size_t certificate_stabilized_step = 0;
  std::vector<CertificateEntry> certificate;
  bool certificate_holds = false;
};

PoissonResult run_poisson_convergence(const ExperimentConfig& cfg);
void write_poisson_artifacts(const ExperimentConfig& cfg, const PoissonResult& result,
                             const std::filesystem::path& dir);

struct RateRow {
  std::size_t samples = 0;
  double matrix_mse = 0.0;  // mean over replicates of ||mean - K||_F^2
  double matrix_se = 0.0;
  double trace_mse = 0.0;  // mean over replicates of (trace estimate - Tr K)^2
  double trace_se = 0.0;
};

struct QuadraticMcResult {
  NtkMatrix exact_k0;
  std::vector<std::pair<std::size_t, MonteCarloEstimate>> means;
  std::vector<double> mean_relative_errors;  // ||mean - K||_F / ||K||_F per entry of `means`
  std::vector<RateRow> rates;
  double matrix_slope = 0.0;
  double trace_slope = 0.0;

  TrainingTrace trace;
  Eigen::VectorXd grid;
  Eigen::VectorXd prediction;
  Eigen::VectorXd target;
  double relative_l2 = 0.0;
  NtkMatrix estimated_k_start;
  NtkMatrix estimated_k_end;
  NtkMatrix exact_k_end;
};

QuadraticMcResult run_quadratic_mc(const ExperimentConfig& cfg);
void write_quadratic_artifacts(const ExperimentConfig& cfg, const QuadraticMcResult& result,
                               const std::filesystem::path& dir);

struct WaveResult {
  TrainingTrace trace;
  Eigen::MatrixXd grid;  // 2 x m, rows (x, t)
  Eigen::VectorXd prediction;
  Eigen::VectorXd exact;
  double relative_l2 = 0.0;
  double argmax_agreement = 0.0;   // fraction of logged steps where the largest weight is the same group
  double ranking_agreement = 0.0;  // fraction where the whole ordering matches
  std::vector<double> mean_relative_gap;  // per group, mean |estimated - exact| / exact
};

WaveResult run_wave_pinn(const ExperimentConfig& cfg);
void write_wave_artifacts(const ExperimentConfig& cfg, const WaveResult& result, const std::filesystem::path& dir);

/// Runs the configured experiment and writes its artifacts (plus config.ini)
/// into cfg.output_dir.
void run_experiment(const ExperimentConfig& cfg);

/// Exact kernel after `step` training steps of the configured run, on the
/// collocation set used at that step.
NtkMatrix ntk_at_step(const ExperimentConfig& cfg, std::size_t step);

}  // namespace ntkpinn
