#include "ntkpinn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "ntkpinn/error.hpp"
#include "ntkpinn/rng.hpp"

namespace ntkpinn {

std::string_view to_string(WeightMode mode) {
  switch (mode) {
    case WeightMode::kFixed:
      return "fixed";
    case WeightMode::kExactNtk:
      return "exact-ntk";
    case WeightMode::kSketch:
      return "sketch";
  }
  return "?";
}

WeightMode weight_mode_from_string(std::string_view name) {
  if (name == "fixed") return WeightMode::kFixed;
  if (name == "exact-ntk") return WeightMode::kExactNtk;
  if (name == "sketch") return WeightMode::kSketch;
  throw ConfigError("unknown weight mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("learning rate must be positive");
  if (update_every == 0) throw ConfigError("update frequency must be at least 1");
  if (spaced && !(spaced->q < 1.0)) throw ConfigError("spaced-update exponent q must be below 1");
  if (spaced && spaced->c < 0.0) throw ConfigError("spaced-update coefficient must be nonnegative");
  if (mode == WeightMode::kSketch) {
    sketch.validate();
    if (sketch_init_samples == 0) throw ConfigError("sketch initialization needs at least one sample");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("moving-average alpha must lie in (0, 1]");
  }
  for (double w : initial_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("initial weights must be positive");
  }
}

double weighted_loss(const Eigen::VectorXd& r, const LossWeights& w, const GroupLayout& layout) {
  if (static_cast<std::size_t>(r.size()) != layout.total()) {
    throw LayoutMismatchError("residual length differs from the group layout");
  }
  return 0.5 * (w.per_entry(layout).array() * r.array().square()).sum();
}

ParamVector gd_step(const ParamVector& theta, const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& r,
                    const LossWeights& w, const GroupLayout& layout, double eta) {
  if (static_cast<std::size_t>(jacobian.rows()) != theta.size()) {
    throw DimensionError("jacobian rows", theta.size(), static_cast<std::size_t>(jacobian.rows()));
  }
  if (jacobian.cols() != r.size()) {
    throw DimensionError("residual", static_cast<std::size_t>(jacobian.cols()), static_cast<std::size_t>(r.size()));
  }
  const Eigen::VectorXd step = jacobian * (w.per_entry(layout).cwiseProduct(r));
  ParamVector out = theta;
  for (std::size_t j = 0; j < out.size(); ++j) out.values[j] -= eta * step(static_cast<Eigen::Index>(j));
  return out;
}

double spaced_increment(const LossWeights& current, const LossWeights& candidate, const Eigen::VectorXd& r_next) {
  if (current.values.size() != candidate.values.size() || current.names != candidate.names) {
    throw LayoutMismatchError("spaced update: weight groups differ");
  }
  double lmax = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < current.values.size(); ++g) lmax = std::max(lmax, candidate.values[g] - current.values[g]);
  return std::max(0.0, lmax) * r_next.squaredNorm();
}

SpacedUpdateState spaced_update(const SpacedUpdateState& state, const LossWeights& candidate,
                                const Eigen::VectorXd& r_next, double h) {
  if (!(h >= 0.0)) throw ConfigError("spaced-update budget must be nonnegative");
  const double inc = spaced_increment(state.weights, candidate, r_next);
  if (state.sum + inc <= h) return {state.sum + inc, candidate};
  return state;
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

LossWeights starting_weights(const TrainConfig& cfg, const GroupLayout& layout) {
  LossWeights w = LossWeights::uniform(layout);
  if (!cfg.initial_weights.empty()) {
    if (cfg.initial_weights.size() != layout.num_groups()) {
      throw DimensionError("initial weights", layout.num_groups(), cfg.initial_weights.size());
    }
    w.values = cfg.initial_weights;
  }
  return w;
}

bool every(std::size_t t, std::size_t k) { return k != 0 && t % k == 0; }

}  // namespace

TrainingTrace train(const ResidualSystem& system, const ProblemSpec& spec, const ParamVector& theta0,
                    const CollocationSet& pts, const TrainConfig& cfg) {
  cfg.validate();
  if (theta0.size() != system.num_params()) throw DimensionError("params", system.num_params(), theta0.size());
  const GroupLayout& layout = pts.layout;
  const std::size_t n = layout.total();
  const std::size_t eig_every = cfg.eig_every != 0 ? cfg.eig_every : (n <= 16 ? 1 : 10);
  const AccumulatorMode acc_mode = cfg.resample ? AccumulatorMode::kTracesOnly : cfg.accumulator;
  const std::uint64_t resample_base = stream_seed(cfg.seed, streams::kCollocation);
  const std::uint64_t sketch_base = stream_seed(cfg.seed, streams::kSketch);

  TrainingTrace trace;
  for (const auto& g : layout.groups()) trace.group_names.push_back(g.name);
  trace.records.reserve(cfg.steps + 1);

  LossWeights weights = starting_weights(cfg, layout);
  SpacedUpdateState spaced_state{0.0, weights};
  double spaced_c = cfg.spaced ? cfg.spaced->c : 0.0;
  std::optional<SketchAccumulator> acc;
  CollocationSet current = pts;
  ParamVector theta = theta0;

  // Offers a new weight candidate, through the spaced-update filter when enabled.
  auto offer = [&](const LossWeights& candidate, const Eigen::VectorXd& r, std::size_t t) {
    if (!cfg.spaced || t == 0) {
      weights = candidate;
      spaced_state.weights = candidate;
      return;
    }
    if (spaced_c == 0.0) {
      const double inc = spaced_increment(spaced_state.weights, candidate, r);
      if (inc > 0.0) spaced_c = 10.0 * inc;
    }
    const double h = spaced_c * std::pow(1.0 + static_cast<double>(t), cfg.spaced->q);
    const SpacedUpdateState next = spaced_update(spaced_state, candidate, r, h);
    if (next.sum != spaced_state.sum || !(next.weights == spaced_state.weights)) ++trace.spaced_accepts;
    spaced_state = next;
    weights = spaced_state.weights;
  };

  for (std::size_t t = 0; t <= cfg.steps; ++t) {
    const auto start = std::chrono::steady_clock::now();
    if (cfg.resample && t > 0) current = sample_collocation(spec, layout, stream_seed(resample_base, t));

    const std::span<const double> th = theta.span();
    const Eigen::VectorXd r = system.residual(th, current);
    const bool want_eig = cfg.record_eigenvalues && every(t, eig_every);
    const bool want_exact = cfg.mode == WeightMode::kSketch && every(t, cfg.exact_trace_every);
    const bool need_jacobian = cfg.mode == WeightMode::kExactNtk || want_eig || want_exact;

    Eigen::MatrixXd jac;
    std::optional<NtkMatrix> kernel;
    if (need_jacobian) jac = system.jacobian(th, current);
    if (cfg.mode == WeightMode::kExactNtk || want_eig) kernel = ntk(jac, layout);

    switch (cfg.mode) {
      case WeightMode::kFixed:
        break;
      case WeightMode::kExactNtk:
        if (t % cfg.update_every == 0) offer(ntk_weights(*kernel), r, t);
        break;
      case WeightMode::kSketch:
        if (t == 0) {
          acc = moving_average_init(system, th, current, cfg.sketch, cfg.sketch_init_samples, cfg.alpha, acc_mode,
                                    stream_seed(sketch_base, 0));
        } else {
          acc->update(single_sample_sketch(system, th, current, cfg.sketch, stream_seed(sketch_base, t), &r,
                                           acc_mode == AccumulatorMode::kFullMatrix));
        }
        offer(sketch_weights(*acc, weights), r, t);
        break;
    }

    const Eigen::VectorXd wvec = weights.per_entry(layout);
    const Eigen::VectorXd weighted_r = wvec.cwiseProduct(r);
    StepRecord rec;
    rec.step = t;
    rec.loss = 0.5 * weighted_r.dot(r);
    if (!std::isfinite(rec.loss)) throw DivergenceError(t);
    rec.res_norm_sq = r.squaredNorm();

    const bool unit_weights = (wvec.array() == 1.0).all();
    Eigen::VectorXd grad_g, grad_f;
    if (need_jacobian) {
      grad_g = jac * weighted_r;
      grad_f = unit_weights ? grad_g : Eigen::VectorXd(jac * r);
    } else {
      if (unit_weights) {
        grad_g = system.jacobian_times(th, current, std::span<const double>(weighted_r.data(), n));
        grad_f = grad_g;
      } else {
        Eigen::MatrixXd v(static_cast<Eigen::Index>(n), 2);
        v.col(0) = weighted_r;
        v.col(1) = r;
        const Eigen::MatrixXd both = system.jacobian_times(th, current, v);
        grad_g = both.col(0);
        grad_f = both.col(1);
      }
    }
    rec.grad_g_norm_sq = grad_g.squaredNorm();
    rec.grad_f_norm_sq = grad_f.squaredNorm();
    rec.weights = weights.values;
    if (want_eig) rec.eigenvalues = eigenvalues_symmetric(*kernel);

    if (want_exact) {
      ExactTraceRecord ex;
      ex.step = t;
      for (std::size_t g = 0; g < layout.num_groups(); ++g) {
        ex.traces.push_back(jac.middleCols(static_cast<Eigen::Index>(layout.offset(g)),
                                           static_cast<Eigen::Index>(layout.count(g)))
                                .squaredNorm());
      }
      ex.weights = trace_ratio_weights(layout, ex.traces).values;
      ex.estimated_weights = weights.values;
      trace.exact_traces.push_back(std::move(ex));
    }
    if (every(t, cfg.snapshot_every) || (cfg.snapshot_every != 0 && t == cfg.steps)) {
      trace.snapshots.push_back({t, theta.values});
    }

    if (t < cfg.steps) {
      for (std::size_t j = 0; j < theta.size(); ++j) theta.values[j] -= cfg.eta * grad_g(static_cast<Eigen::Index>(j));
    }
    if (cfg.record_wall_time) rec.wall_ms = elapsed_ms(start);
    trace.records.push_back(std::move(rec));
  }

  trace.final_theta = std::move(theta);
  trace.spaced_sum = spaced_state.sum;
  trace.accumulator = std::move(acc);
  return trace;
}

void write_trace_csv(std::ostream& out, const TrainingTrace& trace) {
  std::size_t num_eig = 0;
  for (const auto& r : trace.records) num_eig = std::max(num_eig, r.eigenvalues.size());
  out << "step,loss,res_norm_sq,gradG_norm_sq,gradF_norm_sq";
  for (const auto& g : trace.group_names) out << ",w_" << g;
  for (std::size_t i = 0; i < num_eig; ++i) out << ",eig_" << i;
  out << ",wall_ms\n";
  for (const auto& r : trace.records) {
    out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.res_norm_sq) << ','
        << format_double(r.grad_g_norm_sq) << ',' << format_double(r.grad_f_norm_sq);
    for (double w : r.weights) out << ',' << format_double(w);
    for (std::size_t i = 0; i < num_eig; ++i) {
      out << ',';
      if (i < r.eigenvalues.size()) out << format_double(r.eigenvalues[i]);
    }
    out << ',' << format_double(r.wall_ms) << '\n';
  }
}

namespace {

double time_average(const TrainingTrace& trace, std::size_t t_prime, double StepRecord::*field) {
  if (t_prime == 0) throw Error("time average over zero steps");
  if (t_prime > trace.records.size()) throw DimensionError("time-average horizon", trace.records.size(), t_prime);
  double s = 0.0;
  for (std::size_t t = 0; t < t_prime; ++t) s += trace.records[t].*field;
  return s / static_cast<double>(t_prime);
}

}  // namespace

double time_averaged_residuals(const TrainingTrace& trace, std::size_t t_prime) {
  return time_average(trace, t_prime, &StepRecord::res_norm_sq);
}

double time_averaged_gradients(const TrainingTrace& trace, std::size_t t_prime) {
  return time_average(trace, t_prime, &StepRecord::grad_g_norm_sq);
}

std::vector<CertificateEntry> theorem32_certificate(const TrainingTrace& trace, double eta, std::size_t t_begin,
                                                    std::size_t t_end) {
  std::vector<CertificateEntry> out;
  if (trace.records.size() < 2) return out;
  t_begin = std::max<std::size_t>(t_begin, 1);
  t_end = std::min(t_end, trace.records.size() - 1);
  const double r0 = trace.records[0].res_norm_sq;
  double partial = 0.0;
  for (std::size_t t = 0; t < t_begin; ++t) partial += trace.records[t].res_norm_sq;
  for (std::size_t t = t_begin; t <= t_end; ++t) {
    CertificateEntry e;
    e.t = t;
    e.average = partial / static_cast<double>(t);
    e.bound = (r0 - trace.records[t].res_norm_sq) / (static_cast<double>(t) * eta);
    e.holds = e.average <= e.bound;
    out.push_back(e);
    partial += trace.records[t].res_norm_sq;
  }
  return out;
}

DescentLemmaReport descent_lemma_check(const ScalarFunction& f, const GradientFunction& grad,
                                       std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs,
                                       double lipschitz, double tolerance) {
  DescentLemmaReport rep;
  for (const auto& [x, y] : pairs) {
    if (x.size() != y.size()) throw DimensionError("descent pair", x.size(), y.size());
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
    const double fx = f(x), fy = f(y);
    const double inner = grad(y).dot(xv - yv);
    const double quad = 0.5 * lipschitz * (xv - yv).squaredNorm();
    const double gap = fx - fy - inner - quad;
    const double scale = std::abs(fx) + std::abs(fy) + std::abs(inner) + std::abs(quad);
    ++rep.pairs;
    if (gap > tolerance * scale) ++rep.violations;
    rep.max_violation = std::max(rep.max_violation, gap);
  }
  return rep;
}

DescentLemmaReport descent_lemma_check(const ResidualSystem& system, const CollocationSet& pts,
                                       std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs,
                                       double lipschitz, double tolerance) {
  const auto f = [&](std::span<const double> th) { return 0.5 * system.residual(th, pts).squaredNorm(); };
  const auto grad = [&](std::span<const double> th) {
    const Eigen::VectorXd r = system.residual(th, pts);
    return system.jacobian_times(th, pts, std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
  };
  return descent_lemma_check(f, grad, pairs, lipschitz, tolerance);
}

double empirical_lipschitz(const ResidualSystem& system, const CollocationSet& pts,
                           std::span<const Snapshot> snapshots) {
  double best = 0.0;
  Eigen::VectorXd prev_grad;
  for (std::size_t s = 0; s < snapshots.size(); ++s) {
    const auto& th = snapshots[s].theta;
    const Eigen::VectorXd r = system.residual(th, pts);
    Eigen::VectorXd g = system.jacobian_times(th, pts, std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
    if (s > 0) {
      const auto& pv = snapshots[s - 1].theta;
      double dist = 0.0;
      for (std::size_t j = 0; j < th.size(); ++j) dist += (th[j] - pv[j]) * (th[j] - pv[j]);
      dist = std::sqrt(dist);
      if (dist > 0.0) best = std::max(best, (g - prev_grad).norm() / dist);
    }
    prev_grad = std::move(g);
  }
  return best;
}

DiagnosticsRecord assumption_diagnostics(const TrainingTrace& trace, double lipschitz, std::size_t t_begin,
                                         std::size_t t_end) {
  DiagnosticsRecord d;
  d.k_min = d.l_min = std::numeric_limits<double>::infinity();
  d.k_max = d.l_max = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& r : trace.records) {
    if (r.step < t_begin || r.step > t_end || r.eigenvalues.empty()) continue;
    any = true;
    d.k_min = std::min(d.k_min, r.eigenvalues.front());
    d.k_max = std::max(d.k_max, r.eigenvalues.back());
    for (double w : r.weights) {
      d.l_min = std::min(d.l_min, w);
      d.l_max = std::max(d.l_max, w);
    }
  }
  if (!any) throw Error("assumption diagnostics need recorded eigenvalues");
  d.lipschitz = lipschitz;
  d.admissible_eta = 2.0 * d.k_min * d.l_min / (lipschitz * d.k_max * d.l_max * d.l_max);
  return d;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("log-log slope needs at least two matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace ntkpinn
