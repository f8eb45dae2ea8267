#include "ntkpinn/ntk.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "ntkpinn/error.hpp"

namespace ntkpinn {

LossWeights LossWeights::uniform(const GroupLayout& layout) {
  LossWeights w;
  for (const auto& g : layout.groups()) {
    w.names.push_back(g.name);
    w.values.push_back(1.0);
  }
  return w;
}

double LossWeights::at(std::string_view group) const {
  for (std::size_t g = 0; g < names.size(); ++g) {
    if (names[g] == group) return values[g];
  }
  throw SchemaError("no weight for group '" + std::string(group) + "'");
}

void LossWeights::check_layout(const GroupLayout& layout) const {
  bool ok = names.size() == layout.num_groups() && values.size() == names.size();
  for (std::size_t g = 0; ok && g < names.size(); ++g) ok = names[g] == layout.groups()[g].name;
  if (!ok) throw LayoutMismatchError("loss weights do not match the residual group layout");
}

Eigen::VectorXd LossWeights::per_entry(const GroupLayout& layout) const {
  check_layout(layout);
  Eigen::VectorXd w(static_cast<Eigen::Index>(layout.total()));
  for (std::size_t g = 0; g < layout.num_groups(); ++g) {
    w.segment(static_cast<Eigen::Index>(layout.offset(g)), static_cast<Eigen::Index>(layout.count(g)))
        .setConstant(values[g]);
  }
  return w;
}

NtkMatrix ntk(const Eigen::MatrixXd& jacobian, const GroupLayout& layout) {
  const Eigen::Index n = jacobian.cols();
  if (static_cast<std::size_t>(n) != layout.total()) {
    throw DimensionError("jacobian columns", layout.total(), static_cast<std::size_t>(n));
  }
  // Upper triangle in fixed column panels, one GEMM each. The panel split does
  // not depend on the thread count, so neither does the result.
  constexpr Eigen::Index kPanel = 64;
  const Eigen::Index panels = (n + kPanel - 1) / kPanel;
  Eigen::MatrixXd k(n, n);
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index b = 0; b < panels; ++b) {
    const Eigen::Index c0 = b * kPanel;
    const Eigen::Index w = std::min(kPanel, n - c0);
    k.block(0, c0, c0 + w, w).noalias() = jacobian.leftCols(c0 + w).transpose() * jacobian.middleCols(c0, w);
  }
  // Fill the lower triangle from the upper one, which makes K exactly
  // symmetric (equal to averaging with the transpose).
  k.triangularView<Eigen::StrictlyLower>() = k.transpose();
  return {std::move(k), layout};
}

Eigen::MatrixXd ntk_reference(const Eigen::MatrixXd& jacobian) {
  const Eigen::Index p = jacobian.rows(), n = jacobian.cols();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (Eigen::Index r = 0; r < p; ++r) s += jacobian(r, i) * jacobian(r, j);
      k(i, j) = s;
    }
  }
  return k;
}

double block_trace(const NtkMatrix& k, std::string_view group) {
  const std::size_t g = k.layout.index_of(group);
  return k.values.diagonal()
      .segment(static_cast<Eigen::Index>(k.layout.offset(g)), static_cast<Eigen::Index>(k.layout.count(g)))
      .sum();
}

std::vector<double> block_traces(const NtkMatrix& k) {
  if (k.size() != k.layout.total()) throw DimensionError("kernel size", k.layout.total(), k.size());
  std::vector<double> out;
  for (const auto& g : k.layout.groups()) out.push_back(block_trace(k, g.name));
  return out;
}

LossWeights trace_ratio_weights(const GroupLayout& layout, std::span<const double> traces) {
  if (traces.size() != layout.num_groups()) throw DimensionError("group traces", layout.num_groups(), traces.size());
  double total = 0.0;
  for (double t : traces) total += t;
  LossWeights w;
  for (std::size_t g = 0; g < traces.size(); ++g) {
    const auto& name = layout.groups()[g].name;
    if (!(traces[g] > 0.0) || !std::isfinite(traces[g])) {
      throw DegenerateKernelError("block trace of group '" + name + "' is " + format_double(traces[g]));
    }
    w.names.push_back(name);
    w.values.push_back(total / traces[g]);
  }
  return w;
}

LossWeights ntk_weights(const NtkMatrix& k) {
  const auto traces = block_traces(k);
  return trace_ratio_weights(k.layout, traces);
}

std::vector<double> eigenvalues_symmetric(const Eigen::MatrixXd& k, const JacobiOptions& options) {
  if (k.rows() != k.cols()) throw DimensionError("symmetric matrix columns", static_cast<std::size_t>(k.rows()),
                                                 static_cast<std::size_t>(k.cols()));
  Eigen::MatrixXd a = k;
  const Eigen::Index n = a.rows();
  const double target = options.relative_tolerance * a.norm();
  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  bool converged = off_norm() <= target;
  for (std::size_t sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- G^T A G with G the rotation in the (p, q) plane.
        for (Eigen::Index r = 0; r < n; ++r) {
          const double arp = a(r, p), arq = a(r, q);
          a(r, p) = c * arp - s * arq;
          a(r, q) = s * arp + c * arq;
        }
        for (Eigen::Index r = 0; r < n; ++r) {
          const double apr = a(p, r), aqr = a(q, r);
          a(p, r) = c * apr - s * aqr;
          a(q, r) = s * apr + c * aqr;
        }
        a(p, q) = a(q, p) = 0.0;
      }
    }
    converged = off_norm() <= target;
  }
  if (!converged) throw NumericError("Jacobi eigensolver did not converge");

  std::vector<double> eig(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

std::vector<double> eigenvalues_symmetric(const NtkMatrix& k, const JacobiOptions& options) {
  return eigenvalues_symmetric(k.values, options);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_ntk_csv(std::ostream& out, const NtkMatrix& k) {
  if (k.size() != k.layout.total()) throw DimensionError("kernel size", k.layout.total(), k.size());
  bool first = true;
  for (std::size_t g = 0; g < k.layout.num_groups(); ++g) {
    for (std::size_t i = 0; i < k.layout.count(g); ++i) {
      out << (first ? "" : ",") << k.layout.groups()[g].name << ':' << i;
      first = false;
    }
  }
  out << '\n';
  for (Eigen::Index i = 0; i < k.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.values.cols(); ++j) out << (j ? "," : "") << format_double(k.values(i, j));
    out << '\n';
  }
}

void write_ntk_csv(const std::filesystem::path& path, const NtkMatrix& k, std::string_view header_comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  if (!header_comment.empty()) out << header_comment;
  write_ntk_csv(out, k);
}

}  // namespace ntkpinn
