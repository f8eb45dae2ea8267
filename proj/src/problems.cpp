#include "ntkpinn/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "ntkpinn/error.hpp"
#include "ntkpinn/rng.hpp"

namespace ntkpinn {

using std::numbers::pi;

GroupLayout::GroupLayout(std::vector<Group> groups) : groups_(std::move(groups)) {
  if (groups_.empty()) throw SchemaError("group layout needs at least one group");
  std::set<std::string> names;
  for (const auto& g : groups_) {
    if (!names.insert(g.name).second) throw SchemaError("duplicate group name '" + g.name + "'");
    offsets_.push_back(total_);
    total_ += g.count;
  }
  if (total_ == 0) throw SchemaError("group layout has no residual entries");
}

std::size_t GroupLayout::index_of(std::string_view name) const {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].name == name) return g;
  }
  throw SchemaError("unknown group '" + std::string(name) + "'");
}

std::size_t GroupLayout::group_of(std::size_t entry) const {
  if (entry >= total_) throw DimensionError("residual entry", total_, entry);
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), entry);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

Eigen::MatrixXd CollocationSet::group_points(std::size_t group) const {
  return points.middleCols(static_cast<Eigen::Index>(layout.offset(group)),
                           static_cast<Eigen::Index>(layout.count(group)));
}

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::kPoisson1d:
      return "poisson1d";
    case ProblemKind::kWave1d:
      return "wave1d";
    case ProblemKind::kQuadraticRegression:
      return "quadratic";
  }
  return "?";
}

ProblemKind problem_kind_from_string(std::string_view name) {
  if (name == "poisson1d") return ProblemKind::kPoisson1d;
  if (name == "wave1d") return ProblemKind::kWave1d;
  if (name == "quadratic") return ProblemKind::kQuadraticRegression;
  throw ConfigError("unknown problem kind '" + std::string(name) + "'");
}

const GroupSchema& ProblemSpec::schema(std::string_view group) const {
  for (const auto& g : groups) {
    if (g.name == group) return g;
  }
  throw SchemaError("problem " + std::string(to_string(kind)) + " has no group '" + std::string(group) + "'");
}

ProblemSpec make_poisson1d() {
  ProblemSpec spec;
  spec.kind = ProblemKind::kPoisson1d;
  spec.input_dim = 1;
  spec.lower = {0.0};
  spec.upper = {1.0};
  // Jet over one input: (u, u_x, u_xx).
  spec.groups = {
      {"D", {0.0, 0.0, 1.0}, [](std::span<const double> x) { return -16.0 * pi * pi * std::sin(4.0 * pi * x[0]); },
       std::nullopt, 0.0},
      {"B1", {1.0, 0.0, 0.0}, [](std::span<const double>) { return 0.0; }, 0, 0.0},
      {"B2", {1.0, 0.0, 0.0}, [](std::span<const double>) { return 0.0; }, 0, 1.0},
  };
  spec.exact = [](std::span<const double> x) { return std::sin(4.0 * pi * x[0]); };
  return spec;
}

ProblemSpec make_wave1d(double wave_speed_sq) {
  ProblemSpec spec;
  spec.kind = ProblemKind::kWave1d;
  spec.input_dim = 2;
  spec.lower = {0.0, 0.0};
  spec.upper = {1.0, 1.0};
  spec.wave_speed_sq = wave_speed_sq;
  // Inputs (x, t); jet (u, u_x, u_t, u_xx, u_tt).
  const auto zero = [](std::span<const double>) { return 0.0; };
  spec.groups = {
      {"D", {0.0, 0.0, 0.0, -wave_speed_sq, 1.0}, zero, std::nullopt, 0.0},
      {"D_i", {0.0, 0.0, 1.0, 0.0, 0.0}, zero, 1, 0.0},
      {"B_i", {1.0, 0.0, 0.0, 0.0, 0.0},
       [](std::span<const double> p) { return std::sin(pi * p[0]) + 0.5 * std::sin(4.0 * pi * p[0]); }, 1, 0.0},
      {"B1", {1.0, 0.0, 0.0, 0.0, 0.0}, zero, 0, 0.0},
      {"B2", {1.0, 0.0, 0.0, 0.0, 0.0}, zero, 0, 1.0},
  };
  // The closed form below solves the equation for c2 = 4 only.
  spec.exact = [](std::span<const double> p) {
    const double x = p[0], t = p[1];
    return std::sin(pi * x) * std::cos(2.0 * pi * t) + 0.5 * std::sin(4.0 * pi * x) * std::cos(8.0 * pi * t);
  };
  return spec;
}

ProblemSpec make_quadratic_regression(std::size_t num_points, double noise_std, std::uint64_t seed) {
  if (num_points < 2) throw ConfigError("regression needs at least two data points");
  ProblemSpec spec;
  spec.kind = ProblemKind::kQuadraticRegression;
  spec.input_dim = 1;
  spec.lower = {-1.0};
  spec.upper = {1.0};
  spec.exact = [](std::span<const double> x) {
    return pi * x[0] * x[0] + std::numbers::e * x[0] + std::numbers::sqrt2;
  };
  Rng rng(seed, streams::kData);
  spec.data.noise_std = noise_std;
  for (std::size_t i = 0; i < num_points; ++i) {
    const double x = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(num_points - 1);
    spec.data.x.push_back(x);
    spec.data.y.push_back(spec.exact(std::span<const double>(&x, 1)) + noise_std * rng.normal());
  }
  return spec;
}

GroupLayout default_layout(const ProblemSpec& spec) {
  switch (spec.kind) {
    case ProblemKind::kPoisson1d:
      return GroupLayout({{"D", 2}, {"B1", 1}, {"B2", 1}});
    case ProblemKind::kWave1d:
      return GroupLayout({{"D", 300}, {"D_i", 300}, {"B_i", 100}, {"B1", 100}, {"B2", 100}});
    case ProblemKind::kQuadraticRegression:
      return GroupLayout({{"data", spec.data.x.size()}});
  }
  throw SchemaError("unknown problem kind");
}

namespace {

CollocationSet regression_points(const ProblemSpec& spec, const GroupLayout& layout) {
  if (layout.num_groups() != 1 || layout.groups()[0].name != "data") {
    throw SchemaError("regression layout must be a single group named 'data'");
  }
  if (layout.total() != spec.data.x.size()) {
    throw DimensionError("regression data", spec.data.x.size(), layout.total());
  }
  CollocationSet set{layout, Eigen::MatrixXd(1, static_cast<Eigen::Index>(layout.total()))};
  for (std::size_t i = 0; i < layout.total(); ++i) set.points(0, static_cast<Eigen::Index>(i)) = spec.data.x[i];
  return set;
}

// Uniform on the open interval (lo, hi).
double open_uniform(Rng& rng, double lo, double hi) {
  for (;;) {
    const double v = rng.uniform(lo, hi);
    if (v > lo && v < hi) return v;
  }
}

}  // namespace

CollocationSet sample_collocation(const ProblemSpec& spec, const GroupLayout& layout, std::uint64_t seed) {
  if (spec.kind == ProblemKind::kQuadraticRegression) return regression_points(spec, layout);

  CollocationSet set{layout, Eigen::MatrixXd(static_cast<Eigen::Index>(spec.input_dim),
                                             static_cast<Eigen::Index>(layout.total()))};
  for (std::size_t g = 0; g < layout.num_groups(); ++g) {
    const GroupSchema& schema = spec.schema(layout.groups()[g].name);
    // One stream per group keeps groups independent of each other's counts.
    Rng rng(stream_seed(seed, streams::kCollocation), g);
    for (std::size_t i = 0; i < layout.count(g); ++i) {
      const auto col = static_cast<Eigen::Index>(layout.offset(g) + i);
      for (std::size_t k = 0; k < spec.input_dim; ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        if (schema.fixed_coordinate && *schema.fixed_coordinate == k) {
          set.points(row, col) = schema.fixed_value;
        } else {
          set.points(row, col) = open_uniform(rng, spec.lower[k], spec.upper[k]);
        }
      }
    }
  }
  return set;
}

CollocationSet fixed_collocation(const ProblemSpec& spec, const GroupLayout& layout,
                                 std::span<const double> interior_points) {
  if (spec.kind == ProblemKind::kQuadraticRegression) return regression_points(spec, layout);
  if (spec.input_dim != 1) throw SchemaError("fixed collocation requires a one-dimensional problem");

  CollocationSet set{layout, Eigen::MatrixXd(1, static_cast<Eigen::Index>(layout.total()))};
  for (std::size_t g = 0; g < layout.num_groups(); ++g) {
    const GroupSchema& schema = spec.schema(layout.groups()[g].name);
    if (!schema.fixed_coordinate && layout.count(g) != interior_points.size()) {
      throw DimensionError("interior points of group " + schema.name, layout.count(g), interior_points.size());
    }
    for (std::size_t i = 0; i < layout.count(g); ++i) {
      set.points(0, static_cast<Eigen::Index>(layout.offset(g) + i)) =
          schema.fixed_coordinate ? schema.fixed_value : interior_points[i];
    }
  }
  return set;
}

Eigen::MatrixXd uniform_grid(const ProblemSpec& spec, std::size_t per_dim) {
  if (per_dim < 2) throw ConfigError("grid needs at least two points per dimension");
  const std::size_t d = spec.input_dim;
  std::size_t total = 1;
  for (std::size_t k = 0; k < d; ++k) total *= per_dim;
  Eigen::MatrixXd grid(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(total));
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t i = rem % per_dim;
      rem /= per_dim;
      grid(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(idx)) =
          spec.lower[k] + (spec.upper[k] - spec.lower[k]) * static_cast<double>(i) / static_cast<double>(per_dim - 1);
    }
  }
  return grid;
}

}  // namespace ntkpinn
