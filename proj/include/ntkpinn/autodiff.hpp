#pragma once

// Scalar expression graphs with exact input derivatives up to order two and
// parameter gradients of those derivatives.
//
// Evaluation pushes truncated second-order Taylor coefficients (value, two
// directional first derivatives, one mixed second derivative) forward through
// the graph, then runs a single reverse sweep over all four coefficients to
// obtain the parameter gradient of the requested coefficient.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ntkpinn::ad {

enum class OpKind : std::uint8_t {
  kConstant,
  kInput,
  kParam,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kTanh,
  kSin,
  kCos,
  kExp,
  kPowInt,
};

/// Index of a node inside a ScalarGraph.
struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

struct Node {
  OpKind op = OpKind::kConstant;
  std::uint32_t lhs = 0;  // operand, or input/param slot for leaves
  std::uint32_t rhs = 0;
  double constant = 0.0;  // value for kConstant
  int exponent = 0;       // for kPowInt
};

/// Which derivative of the output is wanted. `coordinates` lists the input
/// coordinates differentiated against: {} is the value, {i} is d/dx_i and
/// {i, j} is d^2/dx_i dx_j.
struct DerivativeRequest {
  std::vector<std::size_t> coordinates;
  bool with_parameter_gradient = false;

  std::size_t order() const noexcept { return coordinates.size(); }
  static DerivativeRequest value() { return {}; }
  static DerivativeRequest first(std::size_t i) { return {{i}}; }
  static DerivativeRequest second(std::size_t i, std::size_t j) { return {{i, j}}; }
};

/// Per-call scratch buffers. One workspace per thread makes concurrent
/// evaluation of the same graph safe.
struct Workspace {
  std::vector<std::array<double, 4>> coeff;    // Taylor coefficients per node
  std::vector<std::array<double, 4>> adjoint;  // their adjoints
};

/// Topologically ordered expression DAG with one output node.
class ScalarGraph {
 public:
  ScalarGraph(std::size_t num_inputs, std::size_t num_params);

  NodeId constant(double value);
  NodeId input(std::size_t coordinate);
  NodeId param(std::size_t slot);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId tanh(NodeId a);
  NodeId sin(NodeId a);
  NodeId cos(NodeId a);
  NodeId exp(NodeId a);
  NodeId pow(NodeId a, int exponent);

  /// Sum of the given nodes; a single node is returned unchanged.
  NodeId sum(std::span<const NodeId> terms);

  void set_output(NodeId node);
  NodeId output() const noexcept { return output_; }
  bool has_output() const noexcept { return has_output_; }

  std::size_t num_inputs() const noexcept { return num_inputs_; }
  std::size_t num_params() const noexcept { return num_params_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::span<const Node> nodes() const noexcept { return nodes_; }

 private:
  NodeId push(Node node);
  void check(NodeId id) const;

  std::size_t num_inputs_;
  std::size_t num_params_;
  std::vector<Node> nodes_;
  NodeId output_{};
  bool has_output_ = false;
};

/// u(x; theta).
double evaluate(const ScalarGraph& graph, std::span<const double> x,
                std::span<const double> theta);
double evaluate(const ScalarGraph& graph, std::span<const double> x,
                std::span<const double> theta, Workspace& ws);

/// Exact derivative of u in the requested input coordinates.
double input_derivative(const ScalarGraph& graph, std::span<const double> x,
                        std::span<const double> theta, const DerivativeRequest& req);
double input_derivative(const ScalarGraph& graph, std::span<const double> x,
                        std::span<const double> theta, const DerivativeRequest& req,
                        Workspace& ws);

/// Gradient with respect to theta of input_derivative(graph, x, theta, req).
std::vector<double> parameter_gradient(const ScalarGraph& graph, std::span<const double> x,
                                       std::span<const double> theta,
                                       const DerivativeRequest& req);
std::vector<double> parameter_gradient(const ScalarGraph& graph, std::span<const double> x,
                                       std::span<const double> theta,
                                       const DerivativeRequest& req, Workspace& ws);

}  // namespace ntkpinn::ad
