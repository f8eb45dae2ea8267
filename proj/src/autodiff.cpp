#include "ntkpinn/autodiff.hpp"

#include <array>
#include <cmath>
#include <string>

#include "ntkpinn/error.hpp"

namespace ntkpinn::ad {

namespace {

// Truncated Taylor coefficients along two input directions e1, e2:
// (u, du.e1, du.e2, e1^T d2u e2).
using Jet = std::array<double, 4>;

// Derivatives f, f', f'', f''' of a scalar primitive at a point.
struct Derivs {
  double f0, f1, f2, f3;
};

Derivs primitive(OpKind op, double a, int exponent) {
  switch (op) {
    case OpKind::kTanh: {
      const double t = std::tanh(a);
      const double s = 1.0 - t * t;
      return {t, s, -2.0 * t * s, -2.0 * s * s + 4.0 * t * t * s};
    }
    case OpKind::kSin: {
      const double s = std::sin(a), c = std::cos(a);
      return {s, c, -s, -c};
    }
    case OpKind::kCos: {
      const double s = std::sin(a), c = std::cos(a);
      return {c, -s, -c, s};
    }
    case OpKind::kExp: {
      const double e = std::exp(a);
      return {e, e, e, e};
    }
    case OpKind::kNeg:
      return {-a, -1.0, 0.0, 0.0};
    case OpKind::kPowInt: {
      const double n = exponent;
      auto term = [&](double coeff, int k) {
        return coeff == 0.0 ? 0.0 : coeff * std::pow(a, exponent - k);
      };
      return {std::pow(a, exponent), term(n, 1), term(n * (n - 1), 2),
              term(n * (n - 1) * (n - 2), 3)};
    }
    default:
      break;
  }
  return {0, 0, 0, 0};
}

Derivs reciprocal(double a) {
  const double r = 1.0 / a;
  return {r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r};
}

Jet push_unary(const Derivs& d, const Jet& x) {
  return {d.f0, d.f1 * x[1], d.f1 * x[2], d.f1 * x[3] + d.f2 * x[1] * x[2]};
}

void pull_unary(const Derivs& d, const Jet& x, const Jet& out_bar, Jet& x_bar) {
  x_bar[0] += out_bar[0] * d.f1 + out_bar[1] * d.f2 * x[1] + out_bar[2] * d.f2 * x[2] +
              out_bar[3] * (d.f2 * x[3] + d.f3 * x[1] * x[2]);
  x_bar[1] += out_bar[1] * d.f1 + out_bar[3] * d.f2 * x[2];
  x_bar[2] += out_bar[2] * d.f1 + out_bar[3] * d.f2 * x[1];
  x_bar[3] += out_bar[3] * d.f1;
}

Jet push_mul(const Jet& x, const Jet& y) {
  return {x[0] * y[0], x[0] * y[1] + x[1] * y[0], x[0] * y[2] + x[2] * y[0],
          x[0] * y[3] + x[1] * y[2] + x[2] * y[1] + x[3] * y[0]};
}

void pull_mul(const Jet& x, const Jet& y, const Jet& out_bar, Jet& x_bar, Jet& y_bar) {
  x_bar[0] += out_bar[0] * y[0] + out_bar[1] * y[1] + out_bar[2] * y[2] + out_bar[3] * y[3];
  x_bar[1] += out_bar[1] * y[0] + out_bar[3] * y[2];
  x_bar[2] += out_bar[2] * y[0] + out_bar[3] * y[1];
  x_bar[3] += out_bar[3] * y[0];
  y_bar[0] += out_bar[0] * x[0] + out_bar[1] * x[1] + out_bar[2] * x[2] + out_bar[3] * x[3];
  y_bar[1] += out_bar[1] * x[0] + out_bar[3] * x[2];
  y_bar[2] += out_bar[2] * x[0] + out_bar[3] * x[1];
  y_bar[3] += out_bar[3] * x[0];
}

Jet& jet(std::vector<Jet>& buf, std::size_t i) { return buf[i]; }

void check_bindings(const ScalarGraph& g, std::span<const double> x,
                    std::span<const double> theta) {
  if (x.size() != g.num_inputs()) throw DimensionError("inputs", g.num_inputs(), x.size());
  if (theta.size() != g.num_params()) throw DimensionError("params", g.num_params(), theta.size());
  if (!g.has_output()) throw SchemaError("graph has no output node");
}

void check_request(const ScalarGraph& g, const DerivativeRequest& req) {
  if (req.order() > 2) throw UnsupportedOrderError(req.order());
  for (std::size_t c : req.coordinates) {
    if (c >= g.num_inputs()) throw DimensionError("derivative coordinate", g.num_inputs(), c);
  }
}

// Forward sweep. Returns index of the Taylor coefficient holding the request.
std::size_t forward(const ScalarGraph& g, std::span<const double> x,
                    std::span<const double> theta, const DerivativeRequest& req, Workspace& ws) {
  const auto nodes = g.nodes();
  ws.coeff.assign(nodes.size(), Jet{0, 0, 0, 0});

  // Direction 1 and 2 seed coordinates; -1 means unused.
  long dir1 = -1, dir2 = -1;
  if (req.order() >= 1) dir1 = static_cast<long>(req.coordinates[0]);
  if (req.order() == 2) dir2 = static_cast<long>(req.coordinates[1]);

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    Jet& out = jet(ws.coeff, i);
    switch (n.op) {
      case OpKind::kConstant:
        out = {n.constant, 0.0, 0.0, 0.0};
        break;
      case OpKind::kInput:
        out = {x[n.lhs], static_cast<long>(n.lhs) == dir1 ? 1.0 : 0.0,
               static_cast<long>(n.lhs) == dir2 ? 1.0 : 0.0, 0.0};
        break;
      case OpKind::kParam:
        out = {theta[n.lhs], 0.0, 0.0, 0.0};
        break;
      case OpKind::kAdd: {
        const Jet& a = jet(ws.coeff, n.lhs);
        const Jet& b = jet(ws.coeff, n.rhs);
        out = {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
        break;
      }
      case OpKind::kSub: {
        const Jet& a = jet(ws.coeff, n.lhs);
        const Jet& b = jet(ws.coeff, n.rhs);
        out = {a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]};
        break;
      }
      case OpKind::kMul:
        out = push_mul(jet(ws.coeff, n.lhs), jet(ws.coeff, n.rhs));
        break;
      case OpKind::kDiv: {
        const Jet& b = jet(ws.coeff, n.rhs);
        out = push_mul(jet(ws.coeff, n.lhs), push_unary(reciprocal(b[0]), b));
        break;
      }
      default: {
        const Jet& a = jet(ws.coeff, n.lhs);
        out = push_unary(primitive(n.op, a[0], n.exponent), a);
        break;
      }
    }
  }
  switch (req.order()) {
    case 0:
      return 0;
    case 1:
      return 1;
    default:
      return 3;
  }
}

void reverse(const ScalarGraph& g, std::size_t component, Workspace& ws,
             std::vector<double>& grad) {
  const auto nodes = g.nodes();
  ws.adjoint.assign(nodes.size(), Jet{0, 0, 0, 0});
  jet(ws.adjoint, g.output().index)[component] = 1.0;
  grad.assign(g.num_params(), 0.0);

  for (std::size_t k = nodes.size(); k-- > 0;) {
    const Node& n = nodes[k];
    const Jet bar = jet(ws.adjoint, k);
    if (bar == Jet{0, 0, 0, 0}) continue;
    switch (n.op) {
      case OpKind::kConstant:
      case OpKind::kInput:
        break;
      case OpKind::kParam:
        // Parameters only enter the value coefficient.
        grad[n.lhs] += bar[0];
        break;
      case OpKind::kAdd:
      case OpKind::kSub: {
        const double sign = n.op == OpKind::kAdd ? 1.0 : -1.0;
        Jet& a = jet(ws.adjoint, n.lhs);
        for (int c = 0; c < 4; ++c) a[c] += bar[c];
        Jet& b = jet(ws.adjoint, n.rhs);
        for (int c = 0; c < 4; ++c) b[c] += sign * bar[c];
        break;
      }
      case OpKind::kMul: {
        if (n.lhs == n.rhs) {
          Jet tmp{0, 0, 0, 0};
          pull_mul(jet(ws.coeff, n.lhs), jet(ws.coeff, n.rhs), bar, jet(ws.adjoint, n.lhs), tmp);
          Jet& a = jet(ws.adjoint, n.lhs);
          for (int c = 0; c < 4; ++c) a[c] += tmp[c];
        } else {
          pull_mul(jet(ws.coeff, n.lhs), jet(ws.coeff, n.rhs), bar, jet(ws.adjoint, n.lhs),
                   jet(ws.adjoint, n.rhs));
        }
        break;
      }
      case OpKind::kDiv: {
        const Jet b = jet(ws.coeff, n.rhs);
        const Derivs rd = reciprocal(b[0]);
        const Jet r = push_unary(rd, b);
        Jet a_bar{0, 0, 0, 0}, r_bar{0, 0, 0, 0}, b_bar{0, 0, 0, 0};
        pull_mul(jet(ws.coeff, n.lhs), r, bar, a_bar, r_bar);
        pull_unary(rd, b, r_bar, b_bar);
        Jet& a_acc = jet(ws.adjoint, n.lhs);
        for (int c = 0; c < 4; ++c) a_acc[c] += a_bar[c];
        Jet& b_acc = jet(ws.adjoint, n.rhs);
        for (int c = 0; c < 4; ++c) b_acc[c] += b_bar[c];
        break;
      }
      default: {
        const Jet a = jet(ws.coeff, n.lhs);
        pull_unary(primitive(n.op, a[0], n.exponent), a, bar, jet(ws.adjoint, n.lhs));
        break;
      }
    }
  }
}

}  // namespace

ScalarGraph::ScalarGraph(std::size_t num_inputs, std::size_t num_params)
    : num_inputs_(num_inputs), num_params_(num_params) {}

NodeId ScalarGraph::push(Node node) {
  nodes_.push_back(node);
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void ScalarGraph::check(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw SchemaError("operand node " + std::to_string(id.index) + " does not exist yet");
  }
}

NodeId ScalarGraph::constant(double value) {
  return push({OpKind::kConstant, 0, 0, value, 0});
}

NodeId ScalarGraph::input(std::size_t coordinate) {
  if (coordinate >= num_inputs_) throw DimensionError("input coordinate", num_inputs_, coordinate);
  return push({OpKind::kInput, static_cast<std::uint32_t>(coordinate), 0, 0.0, 0});
}

NodeId ScalarGraph::param(std::size_t slot) {
  if (slot >= num_params_) throw DimensionError("param slot", num_params_, slot);
  return push({OpKind::kParam, static_cast<std::uint32_t>(slot), 0, 0.0, 0});
}

#define NTKPINN_BINARY(name, kind)                  \
  NodeId ScalarGraph::name(NodeId a, NodeId b) {    \
    check(a);                                       \
    check(b);                                       \
    return push({kind, a.index, b.index, 0.0, 0});  \
  }
NTKPINN_BINARY(add, OpKind::kAdd)
NTKPINN_BINARY(sub, OpKind::kSub)
NTKPINN_BINARY(mul, OpKind::kMul)
NTKPINN_BINARY(div, OpKind::kDiv)
#undef NTKPINN_BINARY

#define NTKPINN_UNARY(name, kind)               \
  NodeId ScalarGraph::name(NodeId a) {          \
    check(a);                                   \
    return push({kind, a.index, 0, 0.0, 0});    \
  }
NTKPINN_UNARY(neg, OpKind::kNeg)
NTKPINN_UNARY(tanh, OpKind::kTanh)
NTKPINN_UNARY(sin, OpKind::kSin)
NTKPINN_UNARY(cos, OpKind::kCos)
NTKPINN_UNARY(exp, OpKind::kExp)
#undef NTKPINN_UNARY

NodeId ScalarGraph::pow(NodeId a, int exponent) {
  check(a);
  return push({OpKind::kPowInt, a.index, 0, 0.0, exponent});
}

NodeId ScalarGraph::sum(std::span<const NodeId> terms) {
  if (terms.empty()) return constant(0.0);
  NodeId acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

void ScalarGraph::set_output(NodeId node) {
  check(node);
  output_ = node;
  has_output_ = true;
}

double evaluate(const ScalarGraph& graph, std::span<const double> x,
                std::span<const double> theta, Workspace& ws) {
  return input_derivative(graph, x, theta, DerivativeRequest::value(), ws);
}

double evaluate(const ScalarGraph& graph, std::span<const double> x,
                std::span<const double> theta) {
  Workspace ws;
  return evaluate(graph, x, theta, ws);
}

double input_derivative(const ScalarGraph& graph, std::span<const double> x,
                        std::span<const double> theta, const DerivativeRequest& req,
                        Workspace& ws) {
  check_bindings(graph, x, theta);
  check_request(graph, req);
  const std::size_t comp = forward(graph, x, theta, req, ws);
  return jet(ws.coeff, graph.output().index)[comp];
}

double input_derivative(const ScalarGraph& graph, std::span<const double> x,
                        std::span<const double> theta, const DerivativeRequest& req) {
  Workspace ws;
  return input_derivative(graph, x, theta, req, ws);
}

std::vector<double> parameter_gradient(const ScalarGraph& graph, std::span<const double> x,
                                       std::span<const double> theta,
                                       const DerivativeRequest& req, Workspace& ws) {
  check_bindings(graph, x, theta);
  check_request(graph, req);
  const std::size_t comp = forward(graph, x, theta, req, ws);
  std::vector<double> grad;
  reverse(graph, comp, ws, grad);
  return grad;
}

std::vector<double> parameter_gradient(const ScalarGraph& graph, std::span<const double> x,
                                       std::span<const double> theta,
                                       const DerivativeRequest& req) {
  Workspace ws;
  return parameter_gradient(graph, x, theta, req, ws);
}

}  // namespace ntkpinn::ad
