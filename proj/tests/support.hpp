#pragma once

// Independent oracles shared by the test binaries.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "ntkpinn/model.hpp"

namespace testing {

// Straight-line tanh MLP forward pass written against the flat parameter
// order (W0 row-major, b0, W1, b1, ...) without going through any library
// layout code.
inline double mlp_forward(const ntkpinn::MlpConfig& cfg, std::span<const double> theta, std::span<const double> x) {
  std::vector<double> act(cfg.input_dim);
  for (std::size_t k = 0; k < cfg.input_dim; ++k) act[k] = (x[k] - cfg.input_mean[k]) / cfg.input_std[k];
  std::vector<std::size_t> widths{cfg.input_dim};
  widths.insert(widths.end(), cfg.hidden_widths.begin(), cfg.hidden_widths.end());
  widths.push_back(1);
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    std::vector<double> next(out);
    for (std::size_t r = 0; r < out; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < in; ++c) s += theta[pos + r * in + c] * act[c];
      next[r] = s;
    }
    pos += in * out;
    for (std::size_t r = 0; r < out; ++r) next[r] += theta[pos + r];
    pos += out;
    if (l + 2 < widths.size()) {
      for (double& v : next) v = std::tanh(v);
    }
    act = std::move(next);
  }
  return act[0];
}

// Central difference of f along coordinate k of x.
inline double central_diff(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                           std::size_t k, double h) {
  const double x0 = x[k];
  x[k] = x0 + h;
  const double fp = f(x);
  x[k] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

// Second central difference along coordinate k.
inline double second_diff(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                          std::size_t k, double h) {
  const double x0 = x[k];
  const double f0 = f(x);
  x[k] = x0 + h;
  const double fp = f(x);
  x[k] = x0 - h;
  const double fm = f(x);
  return (fp - 2.0 * f0 + fm) / (h * h);
}

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(gen);
  return m;
}

}  // namespace testing
