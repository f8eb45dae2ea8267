#pragma once

// Experiment configuration: a strict INI file (sections and key = value
// lines). Unknown sections or keys, malformed values and duplicates are
// ConfigErrors.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ntkpinn/trainer.hpp"

namespace ntkpinn {

enum class Experiment { kPoissonConvergence, kQuadraticMc, kWavePinn };

std::string_view to_string(Experiment e);
Experiment experiment_from_string(std::string_view name);  // throws ConfigError

struct ExperimentConfig {
  Experiment experiment = Experiment::kPoissonConvergence;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  // [problem]
  std::vector<std::pair<std::string, std::size_t>> group_counts;  // empty: problem default
  std::vector<double> interior_points;                            // Poisson: fixed interior points
  double wave_speed_sq = 4.0;
  std::size_t regression_points = 50;
  double noise_std = 0.7071067811865476;

  // [model]
  std::vector<std::size_t> hidden;

  // [train] and [sketch]
  TrainConfig train;
  AltTraceConfig alt_trace;

  // [quadratic]
  std::vector<std::size_t> mean_samples{1, 2000, 20000};
  std::vector<std::size_t> rate_samples{1, 10, 100, 1000};
  std::size_t replicates = 100;
  std::vector<double> theta0{1.0, 1.0, 1.0};
  std::size_t predictor_grid = 201;

  // [poisson]
  bool certificate_run = true;
  std::size_t certificate_steps = 2000;

  // [wave]
  std::size_t grid_per_dim = 101;

  void validate() const;  // throws ConfigError

  /// Every setting as INI text in a fixed order. Parsing the result gives
  /// back an equal configuration.
  std::string to_ini() const;

  /// FNV-1a hash of to_ini() without the seed and output lines, so the hash
  /// names the experiment settings and the seed is reported separately.
  std::uint64_t hash() const;
};

/// Desk-scale defaults for an experiment.
ExperimentConfig default_config(Experiment e);

/// Parses INI text. [experiment] name selects the defaults that the other
/// keys override.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

}  // namespace ntkpinn
