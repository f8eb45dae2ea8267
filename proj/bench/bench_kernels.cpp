// OpenMP kernels against their serial references on the wave network.

#include <benchmark/benchmark.h>

#include "ntkpinn/ntk.hpp"
#include "ntkpinn/residual_system.hpp"
#include "ntkpinn/sketch.hpp"

using namespace ntkpinn;

namespace {

struct Fixture {
  ProblemSpec spec = make_wave1d();
  MlpConfig cfg = MlpConfig::for_box(spec.lower, spec.upper, {64, 64});
  PinnSystem sys{spec, cfg};
  ParamVector theta = init_xavier(cfg, 0);
  CollocationSet pts;

  explicit Fixture(std::size_t per_group) {
    std::vector<GroupLayout::Group> groups;
    for (const char* g : {"D", "D_i", "B_i", "B1", "B2"}) groups.push_back({g, per_group});
    pts = sample_collocation(spec, GroupLayout(std::move(groups)), 0);
  }
};

void BM_Residual(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(f.sys.residual(f.theta.values, f.pts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.pts.size()));
}

void BM_ResidualReference(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference_residual(f.sys, f.theta.values, f.pts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.pts.size()));
}

void BM_Jacobian(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(f.sys.jacobian(f.theta.values, f.pts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.pts.size()));
}

void BM_JacobianReference(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference_jacobian(f.sys, f.theta.values, f.pts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.pts.size()));
}

void BM_Ntk(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  const Eigen::MatrixXd jac = f.sys.jacobian(f.theta.values, f.pts);
  for (auto _ : state) benchmark::DoNotOptimize(ntk(jac, f.pts.layout));
}

void BM_NtkReference(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  const Eigen::MatrixXd jac = f.sys.jacobian(f.theta.values, f.pts);
  for (auto _ : state) benchmark::DoNotOptimize(ntk_reference(jac));
}

void BM_SketchSample(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  const Eigen::VectorXd r = f.sys.residual(f.theta.values, f.pts);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(single_sample_sketch(f.sys, f.theta.values, f.pts, SketchConfig{}, seed++, &r, false));
  }
}

}  // namespace

BENCHMARK(BM_Residual)->Arg(20)->Arg(180)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ResidualReference)->Arg(20)->Arg(180)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Jacobian)->Arg(20)->Arg(180)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_JacobianReference)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Ntk)->Arg(20)->Arg(180)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NtkReference)->Arg(20)->Arg(180)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SketchSample)->Arg(180)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
