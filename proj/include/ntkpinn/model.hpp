#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ntkpinn/autodiff.hpp"

namespace ntkpinn {

/// Fully connected tanh network u: R^d -> R^m with input normalization
/// (x - mean) / std applied before the first layer.
struct MlpConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 1;
  std::vector<double> input_mean;
  std::vector<double> input_std;

  /// Throws ConfigError when a width is zero, there are no hidden layers, or
  /// the normalization does not match input_dim.
  void validate() const;

  /// Normalization chosen so that inputs uniform on the box [lo, hi] have
  /// zero mean and unit standard deviation.
  static MlpConfig for_box(std::span<const double> lo, std::span<const double> hi,
                           std::vector<std::size_t> hidden_widths);
};

/// A contiguous block of the flat parameter vector (a weight matrix stored
/// row-major, or a bias column).
struct ParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<ParamBlock> blocks);

  std::span<const ParamBlock> blocks() const noexcept { return blocks_; }
  std::size_t size() const noexcept { return size_; }
  const ParamBlock& block(const std::string& name) const;

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t size_ = 0;
};

/// Flat parameter vector theta together with the layout describing it.
struct ParamVector {
  std::vector<double> values;
  ParamLayout layout;

  ParamVector() = default;
  ParamVector(std::vector<double> v, ParamLayout l);

  std::size_t size() const noexcept { return values.size(); }
  std::span<const double> span() const noexcept { return values; }
  std::span<double> span() noexcept { return values; }
};

/// Layout of an MLP: per layer l a block "W<l>" (out x in) then "b<l>" (out x 1).
ParamLayout mlp_layout(const MlpConfig& config);

/// Uniform Xavier weights on +-sqrt(6 / (fan_in + fan_out)), zero biases.
ParamVector init_xavier(const MlpConfig& config, std::uint64_t seed);

/// One ScalarGraph per output coordinate, bound to mlp_layout(config).
std::vector<ad::ScalarGraph> compile(const MlpConfig& config);

/// Writes `<stem>.bin` (little-endian float64 values) and `<stem>.json`
/// (layout sidecar).
void save_params(const ParamVector& params, const std::filesystem::path& stem);
ParamVector load_params(const std::filesystem::path& stem);

}  // namespace ntkpinn
