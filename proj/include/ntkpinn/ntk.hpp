#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ntkpinn/problems.hpp"

namespace ntkpinn {

/// Symmetric n x n kernel matrix with the residual group layout it indexes.
struct NtkMatrix {
  Eigen::MatrixXd values;
  GroupLayout layout;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.rows()); }
  double trace() const { return values.trace(); }
};

/// One positive weight per residual group, in layout order.
struct LossWeights {
  std::vector<std::string> names;
  std::vector<double> values;

  /// All-ones weights (the unweighted loss).
  static LossWeights uniform(const GroupLayout& layout);

  std::size_t size() const noexcept { return values.size(); }
  double at(std::string_view group) const;
  /// Expands to one weight per residual entry.
  Eigen::VectorXd per_entry(const GroupLayout& layout) const;
  /// Throws LayoutMismatchError unless the names equal the layout's groups.
  void check_layout(const GroupLayout& layout) const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// K = J^T J for a p x n Jacobian, symmetrized. Columns are computed in
/// parallel when OpenMP is enabled; every entry is an independent dot
/// product, so the result does not depend on the thread count.
NtkMatrix ntk(const Eigen::MatrixXd& jacobian, const GroupLayout& layout);

/// Serial triple-loop K = J^T J without symmetrization. Reference for ntk().
Eigen::MatrixXd ntk_reference(const Eigen::MatrixXd& jacobian);

double block_trace(const NtkMatrix& k, std::string_view group);  // throws SchemaError
std::vector<double> block_traces(const NtkMatrix& k);

/// lambda_g = Tr(K) / Tr(K_gg) from per-group traces. Throws
/// DegenerateKernelError when a trace is nonpositive or not finite.
LossWeights trace_ratio_weights(const GroupLayout& layout, std::span<const double> traces);
LossWeights ntk_weights(const NtkMatrix& k);

struct JacobiOptions {
  double relative_tolerance = 1e-12;
  std::size_t max_sweeps = 100;
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Throws NumericError when the off-diagonal norm is not reduced below
/// tolerance * ||K||_F within max_sweeps.
std::vector<double> eigenvalues_symmetric(const Eigen::MatrixXd& k, const JacobiOptions& options = {});
std::vector<double> eigenvalues_symmetric(const NtkMatrix& k, const JacobiOptions& options = {});

/// Row-major CSV with a header of group-qualified indices ("D:0", "B1:0", ...).
void write_ntk_csv(std::ostream& out, const NtkMatrix& k);
void write_ntk_csv(const std::filesystem::path& path, const NtkMatrix& k, std::string_view header_comment = {});

/// Formats a double with round-trip precision.
std::string format_double(double v);

}  // namespace ntkpinn
