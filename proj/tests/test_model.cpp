#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ntkpinn/autodiff.hpp"
#include "ntkpinn/error.hpp"
#include "ntkpinn/mlp_kernel.hpp"
#include "ntkpinn/model.hpp"
#include "support.hpp"

using namespace ntkpinn;

namespace {

MlpConfig poisson_net() {
  const std::vector<double> lo{0.0}, hi{1.0};
  return MlpConfig::for_box(lo, hi, {100});
}

MlpConfig wave_net(std::vector<std::size_t> hidden = {6, 5}) {
  const std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0};
  return MlpConfig::for_box(lo, hi, std::move(hidden));
}

}  // namespace

TEST_CASE("1 -> [100] -> 1 has 301 parameters") {
  const ParamVector theta = init_xavier(poisson_net(), 0);
  CHECK(theta.size() == 301);
  CHECK(theta.layout.block("W0").rows == 100);
  CHECK(theta.layout.block("W1").cols == 100);
  CHECK(theta.layout.block("b1").offset == 300);
}

TEST_CASE("layout blocks are disjoint and cover the vector") {
  const ParamLayout layout = mlp_layout(wave_net({7, 3, 4}));
  std::size_t next = 0;
  for (const auto& b : layout.blocks()) {
    CHECK(b.offset == next);
    next += b.size();
  }
  CHECK(next == layout.size());
  CHECK(layout.size() == 2 * 7 + 7 + 7 * 3 + 3 + 3 * 4 + 4 + 4 + 1);
}

TEST_CASE("init is deterministic per seed and biases are zero") {
  const MlpConfig cfg = poisson_net();
  const ParamVector a = init_xavier(cfg, 42), b = init_xavier(cfg, 42), c = init_xavier(cfg, 43);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  for (const char* name : {"b0", "b1"}) {
    const auto& blk = a.layout.block(name);
    for (std::size_t i = 0; i < blk.size(); ++i) CHECK(a.values[blk.offset + i] == 0.0);
  }
  const double bound = std::sqrt(6.0 / 101.0);
  for (double v : a.values) CHECK(std::abs(v) <= bound);
}

TEST_CASE("first-layer weight variance is 2 / (fan_in + fan_out)") {
  const MlpConfig cfg = poisson_net();
  double sum = 0.0, sumsq = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const ParamVector th = init_xavier(cfg, seed);
    const auto& w0 = th.layout.block("W0");
    // One weight per seed keeps the draws independent across seeds.
    const double v = th.values[w0.offset + seed % w0.size()];
    sum += v;
    sumsq += v * v;
    ++count;
  }
  const double mean = sum / static_cast<double>(count);
  const double var = sumsq / static_cast<double>(count) - mean * mean;
  CHECK(var == doctest::Approx(2.0 / 101.0).epsilon(0.1));
}

TEST_CASE("config validation") {
  MlpConfig cfg = poisson_net();
  cfg.hidden_widths.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(compile(cfg), ConfigError);
  cfg = poisson_net();
  cfg.hidden_widths = {3, 0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = poisson_net();
  cfg.input_std = {0.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero parameters evaluate to zero") {
  const MlpConfig cfg = wave_net();
  const auto g = compile(cfg)[0];
  const std::vector<double> theta(mlp_layout(cfg).size(), 0.0);
  for (double x : {0.0, 0.3, 1.0}) {
    const std::vector<double> p{x, 1.0 - x};
    CHECK(ad::evaluate(g, p, theta) == 0.0);
  }
}

TEST_CASE("compiled graph matches matrix re-implementation") {
  const MlpConfig cfg = wave_net({9, 7});
  const ParamVector theta = init_xavier(cfg, 5);
  const auto g = compile(cfg)[0];
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    const std::vector<double> p{u(gen), u(gen)};
    const double ref = testing::mlp_forward(cfg, theta.values, p);
    CHECK(std::abs(ad::evaluate(g, p, theta.values) - ref) <= 1e-14 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("normalized inputs over the box have zero mean and unit std") {
  const MlpConfig cfg = wave_net();
  for (std::size_t k = 0; k < 2; ++k) {
    double s = 0.0, ss = 0.0;
    const int n = 10001;
    for (int i = 0; i < n; ++i) {
      const double x = static_cast<double>(i) / (n - 1);
      const double z = (x - cfg.input_mean[k]) / cfg.input_std[k];
      s += z;
      ss += z * z;
    }
    const double mean = s / n;
    CHECK(std::abs(mean) <= 0.05);
    CHECK(std::abs(std::sqrt(ss / n - mean * mean) - 1.0) <= 0.05);
  }
}

TEST_CASE("checkpoint round trip") {
  const ParamVector theta = init_xavier(wave_net(), 9);
  const auto dir = std::filesystem::temp_directory_path() / "ntkpinn_model_test";
  std::filesystem::create_directories(dir);
  save_params(theta, dir / "ckpt");
  CHECK(std::filesystem::file_size(dir / "ckpt.bin") == theta.size() * 8);
  const ParamVector back = load_params(dir / "ckpt");
  CHECK(back.values == theta.values);
  CHECK(back.layout == theta.layout);

  std::filesystem::resize_file(dir / "ckpt.bin", 8);
  CHECK_THROWS(load_params(dir / "ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("batched Taylor kernel matches the scalar graph") {
  const MlpConfig cfg = wave_net({7, 6});
  const ParamVector theta = init_xavier(cfg, 2);
  const auto g = compile(cfg)[0];
  const TaylorMlp kernel(cfg);
  CHECK(kernel.jet_size() == 5);

  const Eigen::MatrixXd pts = (testing::random_matrix(2, 13, 4).array() * 0.3 + 0.5).matrix();
  const Eigen::MatrixXd jets = kernel.forward(theta.values, pts);
  const Eigen::MatrixXd seeds = testing::random_matrix(5, 13, 8);
  const Eigen::MatrixXd per_point = kernel.per_point_gradients(theta.values, pts, seeds);
  const Eigen::VectorXd pulled = kernel.pullback(theta.values, pts, seeds);

  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(theta.size()));
  for (Eigen::Index b = 0; b < pts.cols(); ++b) {
    const std::vector<double> x{pts(0, b), pts(1, b)};
    const std::vector<ad::DerivativeRequest> reqs{ad::DerivativeRequest::value(), ad::DerivativeRequest::first(0),
                                                  ad::DerivativeRequest::first(1), ad::DerivativeRequest::second(0, 0),
                                                  ad::DerivativeRequest::second(1, 1)};
    Eigen::VectorXd col = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(theta.size()));
    for (std::size_t c = 0; c < reqs.size(); ++c) {
      const double ref = ad::input_derivative(g, x, theta.values, reqs[c]);
      CHECK(std::abs(jets(static_cast<Eigen::Index>(c), b) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
      const auto grad = ad::parameter_gradient(g, x, theta.values, reqs[c]);
      col += seeds(static_cast<Eigen::Index>(c), b) *
             Eigen::Map<const Eigen::VectorXd>(grad.data(), static_cast<Eigen::Index>(grad.size()));
    }
    CHECK((per_point.col(b) - col).norm() <= 1e-12 * std::max(1.0, col.norm()));
    total += col;
  }
  CHECK((pulled - total).norm() <= 1e-12 * std::max(1.0, total.norm()));
}

TEST_CASE("Taylor kernel rejects vector outputs and bad shapes") {
  MlpConfig cfg = wave_net();
  const ParamVector theta = init_xavier(cfg, 0);
  const TaylorMlp kernel(cfg);
  CHECK_THROWS_AS(kernel.forward(theta.values, Eigen::MatrixXd::Zero(3, 2)), DimensionError);
  const std::vector<double> short_theta(3, 0.0);
  CHECK_THROWS_AS(kernel.forward(short_theta, Eigen::MatrixXd::Zero(2, 2)), DimensionError);
  cfg.output_dim = 2;
  CHECK_THROWS_AS(TaylorMlp{cfg}, ConfigError);
}
