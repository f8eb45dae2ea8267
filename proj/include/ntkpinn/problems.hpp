#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ntkpinn {

/// Ordered partition of the residual vector into named groups. The first
/// group is the interior (PDE) group.
class GroupLayout {
 public:
  struct Group {
    std::string name;
    std::size_t count = 0;
    friend bool operator==(const Group&, const Group&) = default;
  };

  GroupLayout() = default;
  explicit GroupLayout(std::vector<Group> groups);

  std::span<const Group> groups() const noexcept { return groups_; }
  std::size_t num_groups() const noexcept { return groups_.size(); }
  std::size_t total() const noexcept { return total_; }
  const std::string& interior() const { return groups_.front().name; }

  std::size_t index_of(std::string_view name) const;  // throws SchemaError
  std::size_t offset(std::size_t group) const { return offsets_[group]; }
  std::size_t count(std::size_t group) const { return groups_[group].count; }
  /// Group index of residual entry i.
  std::size_t group_of(std::size_t entry) const;

  friend bool operator==(const GroupLayout& a, const GroupLayout& b) { return a.groups_ == b.groups_; }

 private:
  std::vector<Group> groups_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// Collocation points per group; coordinates of all points stored
/// column-wise (input_dim x n) in layout order.
struct CollocationSet {
  GroupLayout layout;
  Eigen::MatrixXd points;

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(points.rows()); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(points.cols()); }
  /// Columns belonging to one group.
  Eigen::MatrixXd group_points(std::size_t group) const;
};

enum class ProblemKind { kPoisson1d, kWave1d, kQuadraticRegression };

std::string_view to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(std::string_view name);  // throws ConfigError

using PointFunction = std::function<double(std::span<const double>)>;

/// A residual group of a PDE problem: a linear combination of the solution
/// jet (u, du/dx_k, d2u/dx_k2) minus a target, evaluated on a region. The
/// region is the open domain when `fixed_coordinate` is empty, otherwise the
/// facet where that coordinate equals `fixed_value`.
struct GroupSchema {
  std::string name;
  std::vector<double> jet_coeffs;
  PointFunction target;
  std::optional<std::size_t> fixed_coordinate;
  double fixed_value = 0.0;
};

/// Observations for the quadratically parameterized regression problem.
struct RegressionData {
  std::vector<double> x;
  std::vector<double> y;
  double noise_std = 0.0;
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::kPoisson1d;
  std::size_t input_dim = 1;
  std::vector<double> lower;
  std::vector<double> upper;
  double wave_speed_sq = 4.0;
  std::vector<GroupSchema> groups;  // PDE problems only
  RegressionData data;              // regression only
  PointFunction exact;

  const GroupSchema& schema(std::string_view group) const;  // throws SchemaError
};

/// u_xx = -16 pi^2 sin(4 pi x) on (0, 1), u(0) = u(1) = 0. Groups D, B1, B2.
ProblemSpec make_poisson1d();

/// u_tt - c2 u_xx = 0 on (0,1)^2 with inputs (x, t). Groups D (interior),
/// D_i (u_t(x,0) = 0), B_i (initial displacement), B1 (x=0), B2 (x=1).
ProblemSpec make_wave1d(double wave_speed_sq = 4.0);

/// y_i = pi x_i^2 + e x_i + sqrt(2) + xi_i at equispaced x_i in [-1, 1],
/// xi_i ~ N(0, noise_std^2). One group named "data".
ProblemSpec make_quadratic_regression(std::size_t num_points, double noise_std, std::uint64_t seed);

/// Default group layout for a problem (counts from the reference experiments).
GroupLayout default_layout(const ProblemSpec& spec);

/// Interior points uniform over the open domain, facet groups uniform over
/// their facet. Regression data points are fixed and ignore the seed.
CollocationSet sample_collocation(const ProblemSpec& spec, const GroupLayout& layout,
                                  std::uint64_t seed);

/// Collocation set from explicit interior points, with facet groups placed
/// at the facet value (only for problems whose facets are single points).
CollocationSet fixed_collocation(const ProblemSpec& spec, const GroupLayout& layout,
                                 std::span<const double> interior_points);

/// Tensor grid over the problem box with `per_dim` points per coordinate,
/// endpoints included.
Eigen::MatrixXd uniform_grid(const ProblemSpec& spec, std::size_t per_dim);

}  // namespace ntkpinn
