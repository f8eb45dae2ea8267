#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <thread>

#include "ntkpinn/autodiff.hpp"
#include "ntkpinn/error.hpp"
#include "ntkpinn/model.hpp"
#include "support.hpp"

using namespace ntkpinn;
using ad::DerivativeRequest;
using ad::ScalarGraph;
using std::numbers::pi;

namespace {

std::vector<double> none;

MlpConfig small_net() {
  const std::vector<double> lo{0.0}, hi{1.0};
  return MlpConfig::for_box(lo, hi, {8});
}

}  // namespace

TEST_CASE("evaluate x^2 and theta*x") {
  ScalarGraph g(1, 0);
  g.set_output(g.mul(g.input(0), g.input(0)));
  const std::vector<double> x{3.0};
  CHECK(ad::evaluate(g, x, none) == 9.0);

  ScalarGraph h(1, 1);
  h.set_output(h.mul(h.param(0), h.input(0)));
  const std::vector<double> x2{2.0}, th{5.0};
  CHECK(ad::evaluate(h, x2, th) == 10.0);
}

TEST_CASE("evaluate tanh MLP matches straight-line forward pass") {
  const MlpConfig cfg = small_net();
  const ParamVector theta = init_xavier(cfg, 0);
  const auto graphs = compile(cfg);
  const std::vector<double> x{0.5};
  CHECK(ad::evaluate(graphs[0], x, theta.values) ==
        doctest::Approx(testing::mlp_forward(cfg, theta.values, x)).epsilon(1e-14));
}

TEST_CASE("dimension mismatch names the binding") {
  ScalarGraph g(2, 1);
  g.set_output(g.mul(g.param(0), g.input(1)));
  const std::vector<double> x{1.0}, th{1.0};
  try {
    ad::evaluate(g, x, th);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(e.binding() == "inputs");
  }
  const std::vector<double> x2{1.0, 2.0}, th2{1.0, 2.0};
  try {
    ad::evaluate(g, x2, th2);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(e.binding() == "params");
  }
}

TEST_CASE("input derivatives of closed forms") {
  ScalarGraph cube(1, 0);
  cube.set_output(cube.pow(cube.input(0), 3));
  const std::vector<double> x{2.0};
  CHECK(ad::input_derivative(cube, x, none, DerivativeRequest::second(0, 0)) == doctest::Approx(12.0));
  CHECK(ad::input_derivative(cube, x, none, DerivativeRequest::first(0)) == doctest::Approx(12.0));

  ScalarGraph wave(2, 0);
  const auto px = wave.mul(wave.constant(pi), wave.input(0));
  const auto pt = wave.mul(wave.constant(2.0 * pi), wave.input(1));
  wave.set_output(wave.mul(wave.sin(px), wave.cos(pt)));
  const std::vector<double> p{0.5, 0.0};
  CHECK(ad::input_derivative(wave, p, none, DerivativeRequest::second(1, 1)) ==
        doctest::Approx(-4.0 * pi * pi).epsilon(1e-14));
  // Mixed derivative: -2 pi^2 cos(pi x) sin(2 pi t) vanishes at (0.5, 0).
  CHECK(std::abs(ad::input_derivative(wave, p, none, DerivativeRequest::second(0, 1))) < 1e-13);
  const std::vector<double> q{0.3, 0.1};
  CHECK(ad::input_derivative(wave, q, none, DerivativeRequest::second(0, 1)) ==
        doctest::Approx(-2.0 * pi * pi * std::cos(pi * 0.3) * std::sin(2.0 * pi * 0.1)).epsilon(1e-13));
}

TEST_CASE("order above two is rejected") {
  ScalarGraph g(1, 0);
  g.set_output(g.input(0));
  const std::vector<double> x{1.0};
  CHECK_THROWS_AS(ad::input_derivative(g, x, none, DerivativeRequest{{0, 0, 0}}), UnsupportedOrderError);
  CHECK_THROWS_AS(ad::parameter_gradient(g, x, none, DerivativeRequest{{0, 0, 0}}), UnsupportedOrderError);
}

TEST_CASE("every primitive against finite differences") {
  // u = exp(x) * sin(x) / (2 + cos(x)) - tanh(x)^3 + theta0 * x
  ScalarGraph g(1, 1);
  const auto x = g.input(0);
  const auto num = g.mul(g.exp(x), g.sin(x));
  const auto den = g.add(g.constant(2.0), g.cos(x));
  const auto t3 = g.pow(g.tanh(x), 3);
  g.set_output(g.add(g.sub(g.div(num, den), t3), g.neg(g.neg(g.mul(g.param(0), x)))));
  const std::vector<double> th{0.7};
  const auto f = [&](std::span<const double> xx) { return ad::evaluate(g, xx, th); };
  const auto fx = [&](std::span<const double> xx) {
    return ad::input_derivative(g, xx, th, DerivativeRequest::first(0));
  };
  for (double xv : {-1.2, 0.1, 0.9}) {
    const std::vector<double> p{xv};
    CHECK(testing::rel_err(fx(p), testing::central_diff(f, p, 0, 1e-6)) < 1e-8);
    CHECK(testing::rel_err(ad::input_derivative(g, p, th, DerivativeRequest::second(0, 0)),
                           testing::central_diff(fx, p, 0, 1e-6)) < 1e-8);
  }
}

TEST_CASE("negative integer powers and zero exponent") {
  ScalarGraph g(1, 0);
  g.set_output(g.add(g.pow(g.input(0), -2), g.pow(g.input(0), 0)));
  const std::vector<double> x{2.0};
  CHECK(ad::evaluate(g, x, none) == doctest::Approx(1.25));
  CHECK(ad::input_derivative(g, x, none, DerivativeRequest::first(0)) == doctest::Approx(-2.0 / 8.0));
  CHECK(ad::input_derivative(g, x, none, DerivativeRequest::second(0, 0)) == doctest::Approx(6.0 / 16.0));
}

TEST_CASE("parameter gradients of closed forms") {
  ScalarGraph lin(1, 2);
  lin.set_output(lin.add(lin.mul(lin.param(0), lin.input(0)), lin.param(1)));
  const std::vector<double> x{2.0}, th{0.3, -1.0};
  const auto g0 = ad::parameter_gradient(lin, x, th, DerivativeRequest::value());
  CHECK(g0 == std::vector<double>{2.0, 1.0});

  ScalarGraph quad(1, 1);
  quad.set_output(quad.mul(quad.param(0), quad.mul(quad.input(0), quad.input(0))));
  const std::vector<double> t1{4.0};
  const auto g2 = ad::parameter_gradient(quad, x, t1, DerivativeRequest::second(0, 0));
  REQUIRE(g2.size() == 1);
  CHECK(g2[0] == doctest::Approx(2.0));
}

TEST_CASE("tanh MLP second derivative and its parameter gradient vs finite differences") {
  const MlpConfig cfg = small_net();
  const ParamVector theta = init_xavier(cfg, 0);
  const auto graph = compile(cfg)[0];
  const std::vector<double> x{0.3};

  const auto ux = [&](std::span<const double> xx) {
    return ad::input_derivative(graph, xx, theta.values, DerivativeRequest::first(0));
  };
  const double uxx = ad::input_derivative(graph, x, theta.values, DerivativeRequest::second(0, 0));
  CHECK(testing::rel_err(uxx, testing::central_diff(ux, x, 0, 1e-4)) < 1e-6);

  const auto grad = ad::parameter_gradient(graph, x, theta.values, DerivativeRequest::second(0, 0));
  const auto uxx_of_theta = [&](std::span<const double> th) {
    return ad::input_derivative(graph, x, th, DerivativeRequest::second(0, 0));
  };
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double fd = testing::central_diff(uxx_of_theta, theta.values, j, 1e-5);
    CHECK(std::abs(grad[j] - fd) <= 1e-5 * std::max(std::abs(fd), 1e-3));
  }
}

TEST_CASE("order-0 parameter gradient equals finite difference of evaluate") {
  const std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0};
  const MlpConfig cfg = MlpConfig::for_box(lo, hi, {5, 4});
  const ParamVector theta = init_xavier(cfg, 3);
  const auto graph = compile(cfg)[0];
  const std::vector<double> x{0.2, 0.7};
  const auto grad = ad::parameter_gradient(graph, x, theta.values, DerivativeRequest::value());
  const auto f = [&](std::span<const double> th) { return ad::evaluate(graph, x, th); };
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double fd = testing::central_diff(f, theta.values, j, 1e-6);
    CHECK(std::abs(grad[j] - fd) <= 1e-5 * std::max(std::abs(fd), 1e-4));
  }
}

TEST_CASE("linearity of derivatives") {
  ScalarGraph u(1, 0), v(1, 0), w(1, 0);
  u.set_output(u.tanh(u.mul(u.constant(1.5), u.input(0))));
  v.set_output(v.sin(v.input(0)));
  {
    const auto a = w.mul(w.constant(2.0), w.tanh(w.mul(w.constant(1.5), w.input(0))));
    const auto b = w.mul(w.constant(-3.0), w.sin(w.input(0)));
    w.set_output(w.add(a, b));
  }
  const std::vector<double> x{0.4};
  for (const auto& req : {DerivativeRequest::value(), DerivativeRequest::first(0), DerivativeRequest::second(0, 0)}) {
    const double lhs = ad::input_derivative(w, x, none, req);
    const double rhs = 2.0 * ad::input_derivative(u, x, none, req) - 3.0 * ad::input_derivative(v, x, none, req);
    CHECK(std::abs(lhs - rhs) <= 1e-14 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("re-evaluation is bit-identical and concurrent workspaces are safe") {
  const MlpConfig cfg = small_net();
  const ParamVector theta = init_xavier(cfg, 1);
  const auto graph = compile(cfg)[0];
  const std::vector<double> x{0.77};
  const auto req = DerivativeRequest::second(0, 0);
  const auto ref = ad::parameter_gradient(graph, x, theta.values, req);
  CHECK(ad::parameter_gradient(graph, x, theta.values, req) == ref);

  std::vector<std::vector<double>> results(4);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < results.size(); ++i) {
    workers.emplace_back([&, i] {
      ad::Workspace ws;
      for (int rep = 0; rep < 20; ++rep) results[i] = ad::parameter_gradient(graph, x, theta.values, req, ws);
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& r : results) CHECK(r == ref);
}

TEST_CASE("graph construction checks operands and output") {
  ScalarGraph g(1, 1);
  CHECK_THROWS_AS(g.input(1), DimensionError);
  CHECK_THROWS_AS(g.param(1), DimensionError);
  CHECK_THROWS(g.add(g.input(0), ad::NodeId{99}));
  const std::vector<double> x{1.0}, th{1.0};
  CHECK_THROWS(ad::evaluate(g, x, th));
}
