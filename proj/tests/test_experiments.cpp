#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ntkpinn/cli.hpp"
#include "ntkpinn/config.hpp"
#include "ntkpinn/error.hpp"
#include "ntkpinn/experiments.hpp"

using namespace ntkpinn;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ntkpinn_test_" + name);
  fs::remove_all(p);
  return p;
}

// Every file of `a` exists in `b` with identical bytes.
void require_identical_dirs(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    if (name == "config.ini") continue;  // records the output directory
    INFO(name.string());
    REQUIRE(fs::exists(b / name));
    CHECK(slurp(entry.path()) == slurp(b / name));
    ++files;
  }
  CHECK(files >= 3);
}

void require_headers(const fs::path& dir, const ExperimentConfig& cfg) {
  const std::string head = artifact_header(cfg);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    INFO(entry.path().filename().string());
    CHECK(slurp(entry.path()).rfind(head, 0) == 0);
  }
  CHECK(slurp(dir / "summary.json").find("\"config_hash\": \"" + hex64(cfg.hash()) + "\"") != std::string::npos);
}

ExperimentConfig small_poisson() {
  ExperimentConfig c = default_config(Experiment::kPoissonConvergence);
  c.hidden = {20};
  c.train.steps = 300;
  c.certificate_steps = 50;
  return c;
}

ExperimentConfig small_quadratic() {
  ExperimentConfig c = default_config(Experiment::kQuadraticMc);
  c.mean_samples = {1, 50};
  c.rate_samples = {1, 10, 100};
  c.replicates = 20;
  c.train.steps = 500;
  c.train.sketch_init_samples = 5;
  c.predictor_grid = 21;
  return c;
}

ExperimentConfig small_wave() {
  ExperimentConfig c = default_config(Experiment::kWavePinn);
  c.hidden = {8};
  c.group_counts = {{"D", 20}, {"D_i", 10}, {"B_i", 10}, {"B1", 10}, {"B2", 10}};
  c.train.steps = 20;
  c.train.exact_trace_every = 5;
  c.grid_per_dim = 11;
  return c;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "ntkpinn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("experiment names round trip") {
  for (auto e : {Experiment::kPoissonConvergence, Experiment::kQuadraticMc, Experiment::kWavePinn}) {
    CHECK(experiment_from_string(to_string(e)) == e);
  }
  CHECK_THROWS_AS(experiment_from_string("heat"), ConfigError);
  CHECK(hex64(0) == "0000000000000000");
  CHECK(hex64(0xdeadbeefULL) == "00000000deadbeef");
}

TEST_CASE("default configs survive a to_ini round trip") {
  for (auto e : {Experiment::kPoissonConvergence, Experiment::kQuadraticMc, Experiment::kWavePinn}) {
    ExperimentConfig c = default_config(e);
    c.seed = 17;
    c.train.spaced = SpacedUpdateConfig{2.5, 0.25};
    c.train.initial_weights = {1.0, 2.0};
    c.group_counts = {{"D", 3}};
    const ExperimentConfig back = parse(c.to_ini());
    CHECK(back.to_ini() == c.to_ini());
    CHECK(back.hash() == c.hash());
    CHECK(back.seed == 17);
    REQUIRE(back.train.spaced.has_value());
    CHECK(back.train.spaced->c == 2.5);
    CHECK(back.train.spaced->q == 0.25);
  }
}

TEST_CASE("parsing overrides experiment defaults") {
  const ExperimentConfig c = parse(
      "[experiment]\nname = wave-pinn\nseed = 9\n"
      "[model]\nhidden = 3, 4, 5\n"
      "[train]\neta = 2.5e-6\nsteps = 7\n"
      "[sketch]\nalpha = 0.5\naccumulator = full\n"
      "[problem]\ngroups = D:4, D_i:2, B_i:2, B1:1, B2:1\n");
  CHECK(c.experiment == Experiment::kWavePinn);
  CHECK(c.seed == 9);
  CHECK(c.hidden == std::vector<std::size_t>{3, 4, 5});
  CHECK(c.train.eta == 2.5e-6);
  CHECK(c.train.steps == 7);
  CHECK(c.train.alpha == 0.5);
  CHECK(c.train.accumulator == AccumulatorMode::kFullMatrix);
  CHECK(c.train.resample);  // wave default kept
  REQUIRE(c.group_counts.size() == 5);
  CHECK(c.group_counts[1].first == "D_i");
  CHECK(c.group_counts[1].second == 2);
}

TEST_CASE("spaced keys do not depend on their order in the file") {
  const ExperimentConfig c =
      parse("[train]\nspaced_c = 3\nspaced_q = 0.75\nspaced = true\n[experiment]\nname = poisson-convergence\n");
  REQUIRE(c.train.spaced.has_value());
  CHECK(c.train.spaced->c == 3.0);
  CHECK(c.train.spaced->q == 0.75);
  CHECK_FALSE(parse("[experiment]\nname = poisson-convergence\n[train]\nspaced_c = 3\n").train.spaced.has_value());
}

TEST_CASE("strict parsing rejects unknown or malformed input") {
  const std::string head = "[experiment]\nname = poisson-convergence\n";
  CHECK_THROWS_AS(parse(head + "[train]\nlearning_rate = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[optimizer]\neta = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[train]\neta = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[train]\neta = 1e-3x\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[train]\nsteps = -4\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[train]\neta = 1\neta = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[train]\nresample = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[train]\nmode = adam\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[train]\neta = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[problem]\ngroups = D-4\n"), ConfigError);
  CHECK_THROWS_AS(parse(head + "[model]\nhidden = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[train]\neta = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("eta = 1\n" + head), ConfigError);
  CHECK_THROWS_AS(parse("[experiment]\nname = heat\n"), ConfigError);
  CHECK_THROWS_AS(parse("[experiment\nname = wave-pinn\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/ntkpinn.ini"), ConfigError);
}

TEST_CASE("config hash ignores seed and output directory") {
  ExperimentConfig a = default_config(Experiment::kWavePinn);
  ExperimentConfig b = a;
  b.seed = 123;
  b.output_dir = "elsewhere";
  CHECK(a.hash() == b.hash());
  b.train.eta *= 2.0;
  CHECK(a.hash() != b.hash());
  CHECK(default_config(Experiment::kQuadraticMc).hash() != a.hash());
}

TEST_CASE("stabilization step and running-average slope") {
  TrainingTrace tr;
  tr.group_names = {"D", "B"};
  for (std::size_t t = 0; t <= 100; ++t) {
    StepRecord r;
    r.step = t;
    r.weights = {1.0, t < 40 ? 5.0 : 2.0 + 0.01 * static_cast<double>(t % 2)};
    r.res_norm_sq = t == 0 ? 8.0 : 0.0;  // running average 8/T
    r.grad_g_norm_sq = t < 2 ? 3.0 : 0.0;
    tr.records.push_back(r);
  }
  CHECK(stabilization_step(tr) == 40);
  CHECK(stabilization_step(tr, 1e-6) == 100);
  CHECK(running_average_slope(tr, 10, 100, false) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(running_average_slope(tr, 10, 100, true) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(running_average_slope(tr, 50, 50, true), Error);
}

TEST_CASE("setup follows the configuration") {
  const ExperimentSetup p = make_setup(default_config(Experiment::kPoissonConvergence));
  REQUIRE(p.points.size() == 4);
  CHECK(p.points.points(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(p.points.points(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p.theta0.size() == p.system->num_params());

  ExperimentConfig q = default_config(Experiment::kQuadraticMc);
  q.seed = 5;
  const ExperimentSetup s = make_setup(q);
  CHECK(s.points.size() == 50);
  CHECK(s.theta0.values == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(s.train.seed == 5);

  ExperimentConfig w = small_wave();
  const ExperimentSetup ws = make_setup(w);
  CHECK(ws.points.size() == 60);
  CHECK(ws.points.layout.interior() == "D");

  w.group_counts = {{"D", 3}, {"X", 1}};
  CHECK_THROWS_AS(make_setup(w), SchemaError);
}

TEST_CASE("poisson experiment writes headed, reproducible artifacts") {
  ExperimentConfig c = small_poisson();
  c.output_dir = scratch_dir("poisson_a");
  run_experiment(c);
  for (const char* f : {"trace.csv", "time_averages.csv", "certificate.csv", "certificate_trace.csv", "summary.json",
                        "config.ini"}) {
    CHECK(fs::exists(c.output_dir / f));
  }
  require_headers(c.output_dir, c);
  const fs::path first = c.output_dir;
  c.output_dir = scratch_dir("poisson_b");
  run_experiment(c);
  require_identical_dirs(first, c.output_dir);

  const PoissonResult r = run_poisson_convergence(small_poisson());
  CHECK(r.trace.records.size() == 301);
  CHECK(r.diagnostics.admissible_eta > 0.0);
  CHECK(r.certificate_eta == doctest::Approx(0.5 * r.diagnostics.admissible_eta));
  CHECK(r.certificate_trace->records.size() == 51);

  ExperimentConfig bad = small_poisson();
  bad.train.snapshot_every = 0;
  CHECK_THROWS_AS(run_poisson_convergence(bad), ConfigError);
}

TEST_CASE("quadratic experiment writes headed, reproducible artifacts") {
  ExperimentConfig c = small_quadratic();
  c.output_dir = scratch_dir("quad_a");
  run_experiment(c);
  for (const char* f : {"ntk_exact_start.csv", "ntk_exact_end.csv", "ntk_mc_mean_N1.csv", "ntk_mc_mean_N50.csv",
                        "ntk_estimated_start.csv", "ntk_estimated_end.csv", "mc_rates.csv", "predictor.csv"}) {
    CHECK(fs::exists(c.output_dir / f));
  }
  require_headers(c.output_dir, c);
  const fs::path first = c.output_dir;
  c.output_dir = scratch_dir("quad_b");
  run_experiment(c);
  require_identical_dirs(first, c.output_dir);

  const QuadraticMcResult r = run_quadratic_mc(small_quadratic());
  REQUIRE(r.rates.size() == 3);
  CHECK(r.rates[0].matrix_mse > r.rates[2].matrix_mse);
  CHECK(r.mean_relative_errors[1] < r.mean_relative_errors[0]);
  CHECK(r.prediction.size() == 21);
}

TEST_CASE("a different seed changes the quadratic artifacts") {
  ExperimentConfig a = small_quadratic();
  ExperimentConfig b = a;
  b.seed = 1;
  const QuadraticMcResult ra = run_quadratic_mc(a);
  const QuadraticMcResult rb = run_quadratic_mc(b);
  CHECK(ra.rates[1].matrix_mse != rb.rates[1].matrix_mse);
}

TEST_CASE("wave experiment writes headed, reproducible artifacts") {
  ExperimentConfig c = small_wave();
  c.output_dir = scratch_dir("wave_a");
  run_experiment(c);
  for (const char* f : {"trace.csv", "weights_compare.csv", "solution_grid.csv", "summary.json"}) {
    CHECK(fs::exists(c.output_dir / f));
  }
  require_headers(c.output_dir, c);
  const fs::path first = c.output_dir;
  c.output_dir = scratch_dir("wave_b");
  run_experiment(c);
  require_identical_dirs(first, c.output_dir);

  const WaveResult r = run_wave_pinn(small_wave());
  CHECK(r.trace.exact_traces.size() == 5);
  CHECK(r.grid.cols() == 121);
  CHECK(r.argmax_agreement >= r.ranking_agreement);
  CHECK(r.mean_relative_gap.size() == 5);
  // Grid point (0.3, 0): sin(0.3 pi) + sin(1.2 pi)/2.
  std::size_t found = 0;
  for (Eigen::Index i = 0; i < r.grid.cols(); ++i) {
    if (std::abs(r.grid(0, i) - 0.3) < 1e-12 && r.grid(1, i) == 0.0) {
      CHECK(r.exact(i) == doctest::Approx(std::sin(0.3 * M_PI) + 0.5 * std::sin(1.2 * M_PI)).epsilon(1e-12));
      ++found;
    }
  }
  CHECK(found == 1);
}

TEST_CASE("ntk_at_step matches the kernel of the trained parameters") {
  const ExperimentConfig c = small_wave();
  const ExperimentSetup s = make_setup(c);
  const NtkMatrix k0 = ntk_at_step(c, 0);
  const NtkMatrix direct = ntk(s.system->jacobian(s.theta0.span(), s.points), s.points.layout);
  CHECK((k0.values - direct.values).norm() == 0.0);
  const NtkMatrix k3 = ntk_at_step(c, 3);
  CHECK(k3.size() == 60);
  CHECK((k3.values - k0.values).norm() > 0.0);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch_dir("cli");
  fs::create_directories(dir);
  std::string out, err;

  CHECK(cli({"--help"}, &out) == kExitOk);
  CHECK(out.find("run") != std::string::npos);
  CHECK(cli({}) == kExitConfig);
  CHECK(cli({"run"}) == kExitConfig);
  CHECK(cli({"run", "heat"}, nullptr, &err) == kExitConfig);
  CHECK(err.find("heat") != std::string::npos);

  write_file(dir / "bad.ini", "[experiment]\nname = poisson-convergence\n[train]\nlearnig_rate = 1\n");
  CHECK(cli({"run", "poisson-convergence", "--config", (dir / "bad.ini").string()}, nullptr, &err) == kExitConfig);
  CHECK(err.find("learnig_rate") != std::string::npos);

  write_file(dir / "wave.ini", "[experiment]\nname = wave-pinn\n");
  CHECK(cli({"run", "poisson-convergence", "--config", (dir / "wave.ini").string()}) == kExitConfig);

  write_file(dir / "diverge.ini",
             "[experiment]\nname = poisson-convergence\n[model]\nhidden = 20\n[train]\neta = 10\nsteps = 200\n");
  CHECK(cli({"run", "poisson-convergence", "--config", (dir / "diverge.ini").string(), "--out",
             (dir / "div").string()},
            nullptr, &err) == kExitNumeric);

  std::ostringstream ini;
  ini << small_poisson().to_ini();
  write_file(dir / "small.ini", ini.str());
  CHECK(cli({"run", "poisson-convergence", "--config", (dir / "small.ini").string(), "--seed", "4", "--out",
             (dir / "run").string()},
            &out) == kExitOk);
  CHECK(slurp(dir / "run" / "trace.csv").rfind("# experiment=poisson-convergence", 0) == 0);
  CHECK(slurp(dir / "run" / "trace.csv").find("seed=4 ") != std::string::npos);

  CHECK(cli({"dump-ntk", "--config", (dir / "small.ini").string(), "--step", "5", "--out",
             (dir / "k5.csv").string()}) == kExitOk);
  CHECK(cli({"dump-ntk", "--config", (dir / "small.ini").string(), "--step", "5"}, &out) == kExitOk);
  CHECK(out == slurp(dir / "k5.csv"));
  CHECK(out.find("D:0,D:1,B1:0,B2:0") != std::string::npos);
  CHECK(cli({"dump-ntk", "--step", "5"}) == kExitConfig);
}
