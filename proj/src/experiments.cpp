#include "ntkpinn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "ntkpinn/error.hpp"
#include "ntkpinn/rng.hpp"

namespace ntkpinn {

namespace {

using json = nlohmann::ordered_json;

std::ofstream open_artifact(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << artifact_header(cfg);
  return out;
}

json summary_head(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = std::string(to_string(cfg.experiment));
  j["config_hash"] = hex64(cfg.hash());
  j["seed"] = cfg.seed;
  j["rng"] = std::string(kRngAlgorithm);
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

GroupLayout layout_for(const ExperimentConfig& cfg, const ProblemSpec& spec) {
  if (cfg.group_counts.empty()) return default_layout(spec);
  std::vector<GroupLayout::Group> groups;
  for (const auto& [name, count] : cfg.group_counts) {
    spec.schema(name);
    groups.push_back({name, count});
  }
  return GroupLayout(std::move(groups));
}

double relative_frobenius(const NtkMatrix& a, const NtkMatrix& b) {
  return (a.values - b.values).norm() / b.values.norm();
}

std::vector<std::size_t> ranking(const std::vector<double>& w) {
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  return idx;
}

}  // namespace

std::string artifact_header(const ExperimentConfig& cfg) {
  return "# experiment=" + std::string(to_string(cfg.experiment)) + " config_hash=" + hex64(cfg.hash()) +
         " seed=" + std::to_string(cfg.seed) + " rng=" + std::string(kRngAlgorithm) + "\n";
}

ExperimentSetup make_setup(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentSetup s;
  switch (cfg.experiment) {
    case Experiment::kPoissonConvergence:
      s.spec = make_poisson1d();
      break;
    case Experiment::kWavePinn:
      s.spec = make_wave1d(cfg.wave_speed_sq);
      break;
    case Experiment::kQuadraticMc:
      s.spec = make_quadratic_regression(cfg.regression_points, cfg.noise_std, cfg.seed);
      break;
  }
  const GroupLayout layout = layout_for(cfg, s.spec);

  if (s.spec.kind == ProblemKind::kQuadraticRegression) {
    s.system = make_system(s.spec, nullptr);
    s.theta0 = ParamVector(cfg.theta0, ParamLayout({{"theta", 3, 1}}));
  } else {
    const MlpConfig mlp = MlpConfig::for_box(s.spec.lower, s.spec.upper, cfg.hidden);
    s.system = make_system(s.spec, &mlp);
    s.theta0 = init_xavier(mlp, cfg.seed);
  }

  if (s.spec.kind == ProblemKind::kPoisson1d) {
    std::vector<double> interior = cfg.interior_points;
    if (interior.empty()) {
      // Equispaced in the open interval: 1/3 and 2/3 for the default two points.
      const std::size_t n = layout.count(layout.index_of(layout.interior()));
      for (std::size_t i = 1; i <= n; ++i) interior.push_back(static_cast<double>(i) / static_cast<double>(n + 1));
    }
    s.points = fixed_collocation(s.spec, layout, interior);
  } else {
    s.points = sample_collocation(s.spec, layout, cfg.seed);
  }

  s.train = cfg.train;
  s.train.seed = cfg.seed;
  return s;
}

std::size_t stabilization_step(const TrainingTrace& trace, double tolerance) {
  if (trace.records.empty()) throw Error("stabilization_step: empty trace");
  const auto& last = trace.records.back().weights;
  std::size_t s = trace.records.size() - 1;
  while (s > 0) {
    const auto& w = trace.records[s - 1].weights;
    bool inside = true;
    for (std::size_t g = 0; g < w.size(); ++g) {
      if (std::abs(w[g] - last[g]) > tolerance * std::abs(last[g])) inside = false;
    }
    if (!inside) break;
    --s;
  }
  return s;
}

double running_average_slope(const TrainingTrace& trace, std::size_t t_begin, std::size_t t_end, bool gradients) {
  t_begin = std::max<std::size_t>(t_begin, 1);
  t_end = std::min(t_end, trace.records.size());
  if (t_end <= t_begin) throw Error("running_average_slope: empty range");
  std::vector<double> x, y;
  double sum = 0.0;
  for (std::size_t t = 0; t < t_end; ++t) {
    sum += gradients ? trace.records[t].grad_g_norm_sq : trace.records[t].res_norm_sq;
    const std::size_t count = t + 1;
    if (count >= t_begin) {
      x.push_back(static_cast<double>(count));
      y.push_back(sum / static_cast<double>(count));
    }
  }
  return loglog_slope(x, y);
}

// ---------------------------------------------------------------------------
// Poisson convergence

PoissonResult run_poisson_convergence(const ExperimentConfig& cfg) {
  if (!cfg.train.record_eigenvalues) throw ConfigError("poisson-convergence needs train.record_eigenvalues = true");
  if (cfg.train.snapshot_every == 0) throw ConfigError("poisson-convergence needs train.snapshot_every > 0");
  ExperimentSetup s = make_setup(cfg);
  PoissonResult res;
  res.trace = train(*s.system, s.spec, s.theta0, s.points, s.train);
  const auto& recs = res.trace.records;
  res.final_loss = recs.back().loss;
  res.lipschitz = empirical_lipschitz(*s.system, s.points, res.trace.snapshots);
  res.diagnostics = assumption_diagnostics(res.trace, res.lipschitz);
  res.stabilized_step = stabilization_step(res.trace);

  const std::size_t t_end = recs.size() - 1;
  if (res.stabilized_step + 1 < t_end) {
    res.residual_slope = running_average_slope(res.trace, res.stabilized_step, t_end, false);
    res.gradient_slope = running_average_slope(res.trace, res.stabilized_step, t_end, true);
  }

  // Sorted spectra (ascending from the Jacobi solver) compared step to step.
  std::size_t pairs = 0, monotone = 0;
  const StepRecord* prev = nullptr;
  for (std::size_t t = res.stabilized_step; t < recs.size(); ++t) {
    if (recs[t].eigenvalues.empty()) continue;
    if (prev != nullptr) {
      std::vector<double> a = prev->eigenvalues, b = recs[t].eigenvalues;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      const double scale = std::max(std::abs(a.back()), std::abs(a.front()));
      bool ok = true;
      for (std::size_t i = 0; i < a.size(); ++i) ok = ok && b[i] >= a[i] - 1e-10 * scale;
      ++pairs;
      if (ok) ++monotone;
    }
    prev = &recs[t];
  }
  res.eigen_monotone_fraction = pairs ? static_cast<double>(monotone) / static_cast<double>(pairs) : 1.0;

  const std::size_t tail = recs.size() - std::max<std::size_t>(1, recs.size() / 5);
  for (std::size_t g = 0; g < res.trace.group_names.size(); ++g) {
    double lo = recs[tail].weights[g], hi = lo;
    for (std::size_t t = tail; t < recs.size(); ++t) {
      lo = std::min(lo, recs[t].weights[g]);
      hi = std::max(hi, recs[t].weights[g]);
    }
    res.final_ratio_spread = std::max(res.final_ratio_spread, hi / lo);
  }

  {
    const auto main_cert = theorem32_certificate(res.trace, s.train.eta, std::max<std::size_t>(1, res.stabilized_step));
    res.main_certificate_holds = std::all_of(main_cert.begin(), main_cert.end(),
                                             [](const CertificateEntry& e) { return e.holds; });
  }

  if (cfg.certificate_run) {
    res.certificate_eta = 0.5 * res.diagnostics.admissible_eta;
    TrainConfig tc = s.train;
    tc.eta = res.certificate_eta;
    tc.steps = cfg.certificate_steps;
    tc.snapshot_every = 0;
    res.certificate_trace = train(*s.system, s.spec, s.theta0, s.points, tc);
    res.certificate_stabilized_step = std::max<std::size_t>(1, stabilization_step(*res.certificate_trace));
    res.certificate =
        theorem32_certificate(*res.certificate_trace, tc.eta, res.certificate_stabilized_step, tc.steps);
    res.certificate_holds = !res.certificate.empty() &&
                            std::all_of(res.certificate.begin(), res.certificate.end(),
                                        [](const CertificateEntry& e) { return e.holds; });
  }
  return res;
}

void write_poisson_artifacts(const ExperimentConfig& cfg, const PoissonResult& r, const std::filesystem::path& dir) {
  {
    auto out = open_artifact(dir / "trace.csv", cfg);
    write_trace_csv(out, r.trace);
  }
  {
    auto out = open_artifact(dir / "time_averages.csv", cfg);
    out << "T,avg_res_norm_sq,avg_gradG_norm_sq\n";
    double sr = 0.0, sg = 0.0;
    for (std::size_t t = 0; t + 1 < r.trace.records.size(); ++t) {
      sr += r.trace.records[t].res_norm_sq;
      sg += r.trace.records[t].grad_g_norm_sq;
      const double n = static_cast<double>(t + 1);
      out << t + 1 << ',' << format_double(sr / n) << ',' << format_double(sg / n) << '\n';
    }
  }
  if (r.certificate_trace) {
    {
      auto out = open_artifact(dir / "certificate_trace.csv", cfg);
      write_trace_csv(out, *r.certificate_trace);
    }
    auto out = open_artifact(dir / "certificate.csv", cfg);
    out << "T,average,bound,holds\n";
    for (const auto& e : r.certificate) {
      out << e.t << ',' << format_double(e.average) << ',' << format_double(e.bound) << ',' << (e.holds ? 1 : 0)
          << '\n';
    }
  }

  json j = summary_head(cfg);
  j["eta"] = cfg.train.eta;
  j["steps"] = cfg.train.steps;
  j["final_loss"] = r.final_loss;
  j["initial_loss"] = r.trace.records.front().loss;
  j["stabilized_step"] = r.stabilized_step;
  j["residual_average_slope"] = r.residual_slope;
  j["gradient_average_slope"] = r.gradient_slope;
  j["eigenvalue_monotone_fraction"] = r.eigen_monotone_fraction;
  j["final_weight_spread"] = r.final_ratio_spread;
  j["diagnostics"] = {{"k_min", r.diagnostics.k_min},         {"k_max", r.diagnostics.k_max},
                      {"l_min", r.diagnostics.l_min},         {"l_max", r.diagnostics.l_max},
                      {"lipschitz", r.diagnostics.lipschitz}, {"admissible_eta", r.diagnostics.admissible_eta}};
  j["main_run_certificate_holds"] = r.main_certificate_holds;
  if (r.certificate_trace) {
    j["certificate"] = {{"eta", r.certificate_eta},
                        {"steps", r.certificate_trace->records.size() - 1},
                        {"stabilized_step", r.certificate_stabilized_step},
                        {"final_loss", r.certificate_trace->records.back().loss},
                        {"holds", r.certificate_holds}};
  }
  j["final_weights"] = json::object();
  for (std::size_t g = 0; g < r.trace.group_names.size(); ++g) {
    j["final_weights"][r.trace.group_names[g]] = r.trace.records.back().weights[g];
  }
  write_json(dir / "summary.json", j);
}

// ---------------------------------------------------------------------------
// Quadratic regression Monte Carlo

QuadraticMcResult run_quadratic_mc(const ExperimentConfig& cfg) {
  ExperimentSetup s = make_setup(cfg);
  const ResidualSystem& sys = *s.system;
  const auto th0 = s.theta0.span();
  const GroupLayout& layout = s.points.layout;
  const SketchConfig& sk = s.train.sketch;
  QuadraticMcResult res;
  res.exact_k0 = ntk(sys.jacobian(th0, s.points), layout);

  const std::uint64_t eval_base = stream_seed(cfg.seed, streams::kEvaluation);
  for (std::size_t n : cfg.mean_samples) {
    res.means.emplace_back(n, monte_carlo_average(sys, th0, s.points, sk, n, stream_seed(eval_base, n)));
    res.mean_relative_errors.push_back(relative_frobenius(res.means.back().second.mean, res.exact_k0));
  }

  const double tr_k = res.exact_k0.trace();
  const std::uint64_t rep_base = stream_seed(cfg.seed, streams::kReplicates);
  const auto m = static_cast<std::ptrdiff_t>(cfg.replicates);
  std::vector<double> xs, mat_mse, tr_mse;
  for (std::size_t n : cfg.rate_samples) {
    std::vector<double> mat_err(cfg.replicates), tr_err(cfg.replicates);
    const std::uint64_t n_base = stream_seed(rep_base, n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < m; ++r) {
      const MonteCarloEstimate est =
          monte_carlo_average(sys, th0, s.points, sk, n, stream_seed(n_base, static_cast<std::uint64_t>(r)));
      mat_err[static_cast<std::size_t>(r)] = (est.mean.values - res.exact_k0.values).squaredNorm();
      tr_err[static_cast<std::size_t>(r)] = (est.trace - tr_k) * (est.trace - tr_k);
    }
    auto mean_se = [&](const std::vector<double>& v) {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double ss = 0.0;
      for (double e : v) ss += (e - mean) * (e - mean);
      const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
      return std::pair{mean, sd / std::sqrt(static_cast<double>(v.size()))};
    };
    RateRow row;
    row.samples = n;
    std::tie(row.matrix_mse, row.matrix_se) = mean_se(mat_err);
    std::tie(row.trace_mse, row.trace_se) = mean_se(tr_err);
    res.rates.push_back(row);
    xs.push_back(static_cast<double>(n));
    mat_mse.push_back(row.matrix_mse);
    tr_mse.push_back(row.trace_mse);
  }
  res.matrix_slope = loglog_slope(xs, mat_mse);
  res.trace_slope = loglog_slope(xs, tr_mse);

  res.trace = train(sys, s.spec, s.theta0, s.points, s.train);
  const auto& th_end = res.trace.final_theta.values;
  const std::size_t g = cfg.predictor_grid;
  res.grid.resize(static_cast<Eigen::Index>(g));
  res.target.resize(res.grid.size());
  for (std::size_t i = 0; i < g; ++i) {
    const double x = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(g - 1);
    res.grid(static_cast<Eigen::Index>(i)) = x;
    res.target(static_cast<Eigen::Index>(i)) = s.spec.exact(std::span<const double>(&x, 1));
  }
  res.prediction = sys.predict(th_end, res.grid.transpose());
  res.relative_l2 = (res.prediction - res.target).norm() / res.target.norm();

  res.exact_k_end = ntk(sys.jacobian(th_end, s.points), layout);
  if (s.train.mode == WeightMode::kSketch && s.train.accumulator == AccumulatorMode::kFullMatrix &&
      !s.train.resample) {
    res.estimated_k_start =
        moving_average_init(sys, th0, s.points, sk, s.train.sketch_init_samples, s.train.alpha,
                            AccumulatorMode::kFullMatrix, stream_seed(stream_seed(cfg.seed, streams::kSketch), 0))
            .matrix();
    res.estimated_k_end = res.trace.accumulator->matrix();
  }
  return res;
}

void write_quadratic_artifacts(const ExperimentConfig& cfg, const QuadraticMcResult& r,
                               const std::filesystem::path& dir) {
  const std::string head = artifact_header(cfg);
  write_ntk_csv(dir / "ntk_exact_start.csv", r.exact_k0, head);
  write_ntk_csv(dir / "ntk_exact_end.csv", r.exact_k_end, head);
  for (const auto& [n, est] : r.means) {
    write_ntk_csv(dir / ("ntk_mc_mean_N" + std::to_string(n) + ".csv"), est.mean, head);
  }
  if (r.estimated_k_start.size() != 0) {
    write_ntk_csv(dir / "ntk_estimated_start.csv", r.estimated_k_start, head);
    write_ntk_csv(dir / "ntk_estimated_end.csv", r.estimated_k_end, head);
  }
  {
    auto out = open_artifact(dir / "mc_rates.csv", cfg);
    out << "N,matrix_mse,matrix_se,trace_mse,trace_se\n";
    for (const auto& row : r.rates) {
      out << row.samples << ',' << format_double(row.matrix_mse) << ',' << format_double(row.matrix_se) << ','
          << format_double(row.trace_mse) << ',' << format_double(row.trace_se) << '\n';
    }
  }
  {
    auto out = open_artifact(dir / "trace.csv", cfg);
    write_trace_csv(out, r.trace);
  }
  {
    auto out = open_artifact(dir / "predictor.csv", cfg);
    out << "x,prediction,target\n";
    for (Eigen::Index i = 0; i < r.grid.size(); ++i) {
      out << format_double(r.grid(i)) << ',' << format_double(r.prediction(i)) << ',' << format_double(r.target(i))
          << '\n';
    }
  }

  json j = summary_head(cfg);
  j["exact_trace_start"] = r.exact_k0.trace();
  j["mean_sketch"] = json::array();
  for (std::size_t i = 0; i < r.means.size(); ++i) {
    j["mean_sketch"].push_back({{"N", r.means[i].first}, {"relative_frobenius_error", r.mean_relative_errors[i]}});
  }
  j["matrix_mse_slope"] = r.matrix_slope;
  j["trace_mse_slope"] = r.trace_slope;
  j["final_loss"] = r.trace.records.back().loss;
  j["final_theta"] = r.trace.final_theta.values;
  j["predictor_relative_l2"] = r.relative_l2;
  if (r.estimated_k_start.size() != 0) {
    j["estimated_vs_exact_start"] = relative_frobenius(r.estimated_k_start, r.exact_k0);
    j["estimated_vs_exact_end"] = relative_frobenius(r.estimated_k_end, r.exact_k_end);
  }
  write_json(dir / "summary.json", j);
}

// ---------------------------------------------------------------------------
// Wave equation

WaveResult run_wave_pinn(const ExperimentConfig& cfg) {
  ExperimentSetup s = make_setup(cfg);
  WaveResult res;
  res.trace = train(*s.system, s.spec, s.theta0, s.points, s.train);
  res.grid = uniform_grid(s.spec, cfg.grid_per_dim);
  res.prediction = s.system->predict(res.trace.final_theta.values, res.grid);
  res.exact.resize(res.grid.cols());
  for (Eigen::Index i = 0; i < res.grid.cols(); ++i) {
    const Eigen::VectorXd p = res.grid.col(i);
    res.exact(i) = s.spec.exact(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  }
  res.relative_l2 = (res.prediction - res.exact).norm() / res.exact.norm();

  const auto& ex = res.trace.exact_traces;
  const std::size_t groups = res.trace.group_names.size();
  res.mean_relative_gap.assign(groups, 0.0);
  std::size_t argmax_hits = 0, ranking_hits = 0;
  for (const auto& e : ex) {
    const auto re = ranking(e.weights);
    const auto rs = ranking(e.estimated_weights);
    if (re.front() == rs.front()) ++argmax_hits;
    if (re == rs) ++ranking_hits;
    for (std::size_t g = 0; g < groups; ++g) {
      res.mean_relative_gap[g] += std::abs(e.estimated_weights[g] - e.weights[g]) / e.weights[g];
    }
  }
  if (!ex.empty()) {
    const auto n = static_cast<double>(ex.size());
    res.argmax_agreement = static_cast<double>(argmax_hits) / n;
    res.ranking_agreement = static_cast<double>(ranking_hits) / n;
    for (double& v : res.mean_relative_gap) v /= n;
  }
  return res;
}

void write_wave_artifacts(const ExperimentConfig& cfg, const WaveResult& r, const std::filesystem::path& dir) {
  {
    auto out = open_artifact(dir / "trace.csv", cfg);
    write_trace_csv(out, r.trace);
  }
  {
    auto out = open_artifact(dir / "weights_compare.csv", cfg);
    out << "step";
    for (const auto& g : r.trace.group_names) out << ",exact_w_" << g;
    for (const auto& g : r.trace.group_names) out << ",est_w_" << g;
    for (const auto& g : r.trace.group_names) out << ",exact_trace_" << g;
    out << '\n';
    for (const auto& e : r.trace.exact_traces) {
      out << e.step;
      for (double v : e.weights) out << ',' << format_double(v);
      for (double v : e.estimated_weights) out << ',' << format_double(v);
      for (double v : e.traces) out << ',' << format_double(v);
      out << '\n';
    }
  }
  {
    auto out = open_artifact(dir / "solution_grid.csv", cfg);
    out << "x,t,prediction,exact,abs_error\n";
    for (Eigen::Index i = 0; i < r.grid.cols(); ++i) {
      out << format_double(r.grid(0, i)) << ',' << format_double(r.grid(1, i)) << ',' << format_double(r.prediction(i))
          << ',' << format_double(r.exact(i)) << ',' << format_double(std::abs(r.prediction(i) - r.exact(i))) << '\n';
    }
  }

  json j = summary_head(cfg);
  j["hidden"] = cfg.hidden;
  j["eta"] = cfg.train.eta;
  j["steps"] = cfg.train.steps;
  j["final_loss"] = r.trace.records.back().loss;
  j["relative_l2"] = r.relative_l2;
  j["logged_steps"] = r.trace.exact_traces.size();
  j["argmax_agreement"] = r.argmax_agreement;
  j["ranking_agreement"] = r.ranking_agreement;
  j["mean_relative_weight_gap"] = json::object();
  for (std::size_t g = 0; g < r.trace.group_names.size(); ++g) {
    j["mean_relative_weight_gap"][r.trace.group_names[g]] = r.mean_relative_gap[g];
  }
  write_json(dir / "summary.json", j);
}

// ---------------------------------------------------------------------------

void run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& dir = cfg.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  {
    std::ofstream out(dir / "config.ini", std::ios::binary);
    if (!out) throw ConfigError("output directory '" + dir.string() + "' is not writable");
    out << artifact_header(cfg) << cfg.to_ini();
  }
  switch (cfg.experiment) {
    case Experiment::kPoissonConvergence:
      write_poisson_artifacts(cfg, run_poisson_convergence(cfg), dir);
      break;
    case Experiment::kQuadraticMc:
      write_quadratic_artifacts(cfg, run_quadratic_mc(cfg), dir);
      break;
    case Experiment::kWavePinn:
      write_wave_artifacts(cfg, run_wave_pinn(cfg), dir);
      break;
  }
}

NtkMatrix ntk_at_step(const ExperimentConfig& cfg, std::size_t step) {
  ExperimentSetup s = make_setup(cfg);
  TrainConfig tc = s.train;
  tc.steps = step;
  tc.record_eigenvalues = false;
  tc.exact_trace_every = 0;
  tc.snapshot_every = 0;
  const TrainingTrace trace = train(*s.system, s.spec, s.theta0, s.points, tc);
  CollocationSet pts = s.points;
  if (tc.resample && step > 0) {
    pts = sample_collocation(s.spec, pts.layout, stream_seed(stream_seed(cfg.seed, streams::kCollocation), step));
  }
  return ntk(s.system->jacobian(trace.final_theta.span(), pts), pts.layout);
}

}  // namespace ntkpinn
