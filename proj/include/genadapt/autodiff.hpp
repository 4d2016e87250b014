#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genadapt/tensor.hpp"

namespace genadapt {

using NodeId = std::size_t;

enum class Op : std::uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,        // elementwise
  kScale,      // rank-0 scalar times tensor
  kMatMul,
  kTranspose,
  kConcatRows,
  kTanh,
  kExp,
  kLog,        // ln(max(x, kLogGuard)) elementwise
  kSum,
  kMean,
  kL2Norm,
  kDot,        // flattened inner product -> rank 0
  kCosine,     // guarded cosine similarity -> rank 0
  kRowSoftmax,
  kFrobenius,
  kSquaredError,  // sum((a-b)^2) -> rank 0
};

const char* op_name(Op op);

struct Node {
  Op op;
  std::vector<NodeId> inputs;
  Tensor value;      // forward value, kept current eagerly
  std::string name;  // leaves only, used in error messages
};

// Eager reverse-mode tape. Every builder validates shapes, evaluates the
// node immediately and appends it, so node values are always available.
// backward() walks the tape once in reverse and returns a gradient for
// every leaf (exact zeros for leaves the output does not depend on).
class Graph {
 public:
  NodeId leaf(const std::string& name, Tensor value);
  NodeId constant(Tensor value);
  NodeId constant(double value) { return constant(Tensor::scalar(value)); }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId s, NodeId x);          // s must be rank 0
  NodeId scale(double s, NodeId x) { return scale(constant(s), x); }
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId tanh(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId l2norm(NodeId a);
  NodeId dot(NodeId a, NodeId b);
  NodeId cosine(NodeId a, NodeId b);
  NodeId row_softmax(NodeId a);
  NodeId frobenius(NodeId a);
  NodeId squared_error(NodeId a, NodeId b);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const;
  const Tensor& value(NodeId id) const { return node(id).value; }
  const std::vector<NodeId>& leaves() const { return leaves_; }

  // Rebinds every leaf (all must be present, shapes fixed) and re-evaluates
  // the whole tape in order. Returns the value of the last node.
  const Tensor& forward(const std::map<NodeId, Tensor>& bindings);

  // Reverse pass from a rank-0 output. Returns leaf id -> gradient tensor.
  std::map<NodeId, Tensor> backward(NodeId output) const;

 private:
  NodeId push(Op op, std::vector<NodeId> inputs, Tensor value, std::string name = "");
  Tensor evaluate(Op op, const std::vector<NodeId>& inputs) const;
  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> leaves_;
};

// Central-difference check of backward() against forward() at the current
// leaf values. Each leaf coordinate is perturbed by +-h; relative error is
// |analytic - numeric| / max(1e-12, |analytic| + |numeric|). The graph is
// restored to its original leaf values before returning.
struct GradCheckResult {
  double max_rel_error = 0.0;
  bool pass = true;
  std::string worst;  // "leaf <name>[i]" of the worst coordinate
};

GradCheckResult grad_check(Graph& g, NodeId output, double h = 1e-5, double tol = 1e-4);

}  // namespace genadapt
