#include "genadapt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "genadapt/common.hpp"

namespace genadapt {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kConcatRows: return "concat_rows";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kL2Norm: return "l2norm";
    case Op::kDot: return "dot";
    case Op::kCosine: return "cosine";
    case Op::kRowSoftmax: return "row_softmax";
    case Op::kFrobenius: return "frobenius";
    case Op::kSquaredError: return "squared_error";
  }
  return "?";
}

void Graph::check_id(NodeId id) const {
  if (id >= nodes_.size()) {
    throw UsageError("node id " + std::to_string(id) + " out of range");
  }
}

const Node& Graph::node(NodeId id) const {
  check_id(id);
  return nodes_[id];
}

NodeId Graph::push(Op op, std::vector<NodeId> inputs, Tensor value, std::string name) {
  nodes_.push_back(Node{op, std::move(inputs), std::move(value), std::move(name)});
  return nodes_.size() - 1;
}

NodeId Graph::leaf(const std::string& name, Tensor value) {
  NodeId id = push(Op::kLeaf, {}, std::move(value), name);
  leaves_.push_back(id);
  return id;
}

NodeId Graph::constant(Tensor value) { return push(Op::kConst, {}, std::move(value)); }

namespace {

[[noreturn]] void shape_error(const char* what, const Tensor& a, const Tensor& b) {
  throw UsageError(std::string(what) + " between shapes " + a.shape_str() + " and " + b.shape_str());
}

void softmax_row(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - mx);
    z += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= z;
}

}  // namespace

Tensor Graph::evaluate(Op op, const std::vector<NodeId>& ids) const {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[ids[k]].value; };
  switch (op) {
    case Op::kLeaf:
    case Op::kConst:
      throw UsageError("evaluate on input node");
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (!a.same_shape(b)) shape_error(op_name(op), a, b);
      Tensor out = Tensor::zeros(a.shape());
      for (std::size_t i = 0; i < a.numel(); ++i) {
        out.at(i) = op == Op::kAdd   ? a.at(i) + b.at(i)
                    : op == Op::kSub ? a.at(i) - b.at(i)
                                     : a.at(i) * b.at(i);
      }
      out.check_finite(op_name(op));
      return out;
    }
    case Op::kScale: {
      const Tensor& s = in(0);
      const Tensor& x = in(1);
      if (s.rank() != 0) {
        throw UsageError("scale factor must be rank 0, got shape " + s.shape_str());
      }
      Tensor out = Tensor::zeros(x.shape());
      for (std::size_t i = 0; i < x.numel(); ++i) out.at(i) = s.item() * x.at(i);
      out.check_finite("scale");
      return out;
    }
    case Op::kMatMul:
      return genadapt::matmul(in(0), in(1));
    case Op::kTranspose: {
      const Tensor& a = in(0);
      if (a.rank() != 2) throw UsageError("transpose on shape " + a.shape_str());
      Tensor out = Tensor::zeros({a.cols(), a.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
      return out;
    }
    case Op::kConcatRows: {
      if (ids.empty()) throw UsageError("concat_rows needs at least one input");
      std::size_t cols = 0, rows = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const Tensor& p = in(k);
        if (p.rank() != 2) throw UsageError("concat_rows input of shape " + p.shape_str());
        if (k == 0) cols = p.cols();
        if (p.cols() != cols) shape_error("concat_rows", in(0), p);
        rows += p.rows();
      }
      Tensor out = Tensor::zeros({rows, cols});
      std::size_t r0 = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const Tensor& p = in(k);
        for (std::size_t i = 0; i < p.rows(); ++i)
          for (std::size_t j = 0; j < cols; ++j) out.at(r0 + i, j) = p.at(i, j);
        r0 += p.rows();
      }
      return out;
    }
    case Op::kTanh:
    case Op::kExp:
    case Op::kLog: {
      const Tensor& a = in(0);
      Tensor out = Tensor::zeros(a.shape());
      for (std::size_t i = 0; i < a.numel(); ++i) {
        out.at(i) = op == Op::kTanh  ? std::tanh(a.at(i))
                    : op == Op::kExp ? std::exp(a.at(i))
                                     : std::log(std::max(a.at(i), kLogGuard));
      }
      out.check_finite(op_name(op));
      return out;
    }
    case Op::kSum:
    case Op::kMean: {
      const Tensor& a = in(0);
      double s = 0.0;
      for (std::size_t i = 0; i < a.numel(); ++i) s += a.at(i);
      if (op == Op::kMean) s /= static_cast<double>(a.numel());
      return Tensor::scalar(s);
    }
    case Op::kL2Norm:
    case Op::kFrobenius:
      return Tensor::scalar(l2_norm(in(0)));
    case Op::kDot: {
      double s = dot_flat(in(0), in(1));
      Tensor out = Tensor::scalar(s);
      out.check_finite("dot");
      return out;
    }
    case Op::kCosine:
      return Tensor::scalar(guarded_cosine(in(0), in(1)));
    case Op::kRowSoftmax: {
      const Tensor& a = in(0);
      if (a.rank() != 2) throw UsageError("row_softmax on shape " + a.shape_str());
      Tensor out = Tensor::zeros(a.shape());
      for (std::size_t i = 0; i < a.rows(); ++i) {
        softmax_row(&a.data()[i * a.cols()], &out.data()[i * a.cols()], a.cols());
      }
      return out;
    }
    case Op::kSquaredError: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (!a.same_shape(b)) shape_error("squared_error", a, b);
      double s = 0.0;
      for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = a.at(i) - b.at(i);
        s += d * d;
      }
      Tensor out = Tensor::scalar(s);
      out.check_finite("squared_error");
      return out;
    }
  }
  throw UsageError("unknown op");
}

#define GENADAPT_DEFINE_BINARY(fn, opcode)                                    \
  NodeId Graph::fn(NodeId a, NodeId b) {                                      \
    check_id(a);                                                              \
    check_id(b);                                                              \
    try {                                                                     \
      Tensor v = evaluate(opcode, {a, b});                                    \
      return push(opcode, {a, b}, std::move(v));                              \
    } catch (NumericError & e) {                                              \
      throw NumericError(std::string(op_name(opcode)) + " node: " + e.what()); \
    }                                                                         \
  }

#define GENADAPT_DEFINE_UNARY(fn, opcode)                                     \
  NodeId Graph::fn(NodeId a) {                                                \
    check_id(a);                                                              \
    try {                                                                     \
      Tensor v = evaluate(opcode, {a});                                       \
      return push(opcode, {a}, std::move(v));                                 \
    } catch (NumericError & e) {                                              \
      throw NumericError(std::string(op_name(opcode)) + " node: " + e.what()); \
    }                                                                         \
  }

GENADAPT_DEFINE_BINARY(add, Op::kAdd)
GENADAPT_DEFINE_BINARY(sub, Op::kSub)
GENADAPT_DEFINE_BINARY(mul, Op::kMul)
GENADAPT_DEFINE_BINARY(scale, Op::kScale)
GENADAPT_DEFINE_BINARY(matmul, Op::kMatMul)
GENADAPT_DEFINE_BINARY(dot, Op::kDot)
GENADAPT_DEFINE_BINARY(cosine, Op::kCosine)
GENADAPT_DEFINE_BINARY(squared_error, Op::kSquaredError)
GENADAPT_DEFINE_UNARY(transpose, Op::kTranspose)
GENADAPT_DEFINE_UNARY(tanh, Op::kTanh)
GENADAPT_DEFINE_UNARY(exp, Op::kExp)
GENADAPT_DEFINE_UNARY(log, Op::kLog)
GENADAPT_DEFINE_UNARY(sum, Op::kSum)
GENADAPT_DEFINE_UNARY(mean, Op::kMean)
GENADAPT_DEFINE_UNARY(l2norm, Op::kL2Norm)
GENADAPT_DEFINE_UNARY(row_softmax, Op::kRowSoftmax)
GENADAPT_DEFINE_UNARY(frobenius, Op::kFrobenius)

#undef GENADAPT_DEFINE_BINARY
#undef GENADAPT_DEFINE_UNARY

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
  for (NodeId id : parts) check_id(id);
  Tensor v = evaluate(Op::kConcatRows, parts);
  return push(Op::kConcatRows, parts, std::move(v));
}

const Tensor& Graph::forward(const std::map<NodeId, Tensor>& bindings) {
  if (nodes_.empty()) throw UsageError("forward on empty graph");
  for (NodeId id : leaves_) {
    auto it = bindings.find(id);
    if (it == bindings.end()) {
      throw UsageError("forward missing binding for leaf '" + nodes_[id].name + "'");
    }
    if (!it->second.same_shape(nodes_[id].value)) {
      throw UsageError("forward binding for leaf '" + nodes_[id].name + "' has shape " +
                       it->second.shape_str() + ", expected " + nodes_[id].value.shape_str());
    }
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.op == Op::kLeaf) {
      n.value = bindings.at(id);
    } else if (n.op != Op::kConst) {
      try {
        n.value = evaluate(n.op, n.inputs);
      } catch (NumericError& e) {
        throw NumericError("node #" + std::to_string(id) + " (" + op_name(n.op) +
                           "): " + e.what());
      }
    }
  }
  return nodes_.back().value;
}

std::map<NodeId, Tensor> Graph::backward(NodeId output) const {
  check_id(output);
  if (nodes_[output].value.rank() != 0) {
    throw UsageError("backward from non-scalar node of shape " +
                     nodes_[output].value.shape_str());
  }
  std::vector<std::optional<Tensor>> adj(nodes_.size());
  adj[output] = Tensor::scalar(1.0);

  auto grad_of = [&](NodeId id) -> Tensor& {
    if (!adj[id]) adj[id] = Tensor::zeros(nodes_[id].value.shape());
    return *adj[id];
  };

  for (NodeId id = output + 1; id-- > 0;) {
    if (!adj[id]) continue;
    const Node& n = nodes_[id];
    if (n.op == Op::kLeaf || n.op == Op::kConst) continue;
    const Tensor& g = *adj[id];
    const Tensor& out = n.value;
    auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };

    switch (n.op) {
      case Op::kAdd: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) gb.at(i) += g.at(i);
        break;
      }
      case Op::kSub: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) gb.at(i) -= g.at(i);
        break;
      }
      case Op::kMul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * b.at(i);
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) gb.at(i) += g.at(i) * a.at(i);
        break;
      }
      case Op::kScale: {
        const Tensor& s = in(0);
        const Tensor& x = in(1);
        double gs = 0.0;
        for (std::size_t i = 0; i < g.numel(); ++i) gs += g.at(i) * x.at(i);
        grad_of(n.inputs[0]).at(0) += gs;
        Tensor& gx = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) gx.at(i) += s.item() * g.at(i);
        break;
      }
      case Op::kMatMul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t k = 0; k < a.cols(); ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < b.cols(); ++j) s += g.at(i, j) * b.at(k, j);
            ga.at(i, k) += s;
          }
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t k = 0; k < b.rows(); ++k)
          for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i) s += a.at(i, k) * g.at(i, j);
            gb.at(k, j) += s;
          }
        break;
      }
      case Op::kTranspose: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < out.rows(); ++i)
          for (std::size_t j = 0; j < out.cols(); ++j) ga.at(j, i) += g.at(i, j);
        break;
      }
      case Op::kConcatRows: {
        std::size_t r0 = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor& p = in(k);
          Tensor& gp = grad_of(n.inputs[k]);
          for (std::size_t i = 0; i < p.rows(); ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) gp.at(i, j) += g.at(r0 + i, j);
          r0 += p.rows();
        }
        break;
      }
      case Op::kTanh: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i)
          ga.at(i) += (1.0 - out.at(i) * out.at(i)) * g.at(i);
        break;
      }
      case Op::kExp: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += out.at(i) * g.at(i);
        break;
      }
      case Op::kLog: {
        const Tensor& a = in(0);
        Tensor& ga = grad_of(n.inputs[0]);
        // Zero slope in the clamped region, matching the forward guard.
        for (std::size_t i = 0; i < g.numel(); ++i)
          if (a.at(i) > kLogGuard) ga.at(i) += g.at(i) / a.at(i);
        break;
      }
      case Op::kSum: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga.at(i) += g.item();
        break;
      }
      case Op::kMean: {
        Tensor& ga = grad_of(n.inputs[0]);
        double s = g.item() / static_cast<double>(ga.numel());
        for (std::size_t i = 0; i < ga.numel(); ++i) ga.at(i) += s;
        break;
      }
      case Op::kL2Norm:
      case Op::kFrobenius: {
        const Tensor& a = in(0);
        Tensor& ga = grad_of(n.inputs[0]);
        double s = g.item() / std::max(out.item(), kNormGuard);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga.at(i) += s * a.at(i);
        break;
      }
      case Op::kDot: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < a.numel(); ++i) ga.at(i) += g.item() * b.at(i);
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < b.numel(); ++i) gb.at(i) += g.item() * a.at(i);
        break;
      }
      case Op::kCosine: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        double na = l2_norm(a);
        double nb = l2_norm(b);
        double cna = std::max(na, kNormGuard);
        double cnb = std::max(nb, kNormGuard);
        double c = out.item();
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < a.numel(); ++i) {
          double d = b.at(i) / (cna * cnb);
          if (na > kNormGuard) d -= c * a.at(i) / (na * na);
          ga.at(i) += g.item() * d;
        }
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < b.numel(); ++i) {
          double d = a.at(i) / (cna * cnb);
          if (nb > kNormGuard) d -= c * b.at(i) / (nb * nb);
          gb.at(i) += g.item() * d;
        }
        break;
      }
      case Op::kRowSoftmax: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < out.rows(); ++i) {
          double gy = 0.0;
          for (std::size_t j = 0; j < out.cols(); ++j) gy += g.at(i, j) * out.at(i, j);
          for (std::size_t j = 0; j < out.cols(); ++j)
            ga.at(i, j) += out.at(i, j) * (g.at(i, j) - gy);
        }
        break;
      }
      case Op::kSquaredError: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < a.numel(); ++i)
          ga.at(i) += 2.0 * g.item() * (a.at(i) - b.at(i));
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < b.numel(); ++i)
          gb.at(i) -= 2.0 * g.item() * (a.at(i) - b.at(i));
        break;
      }
      case Op::kLeaf:
      case Op::kConst:
        break;
    }
  }

  std::map<NodeId, Tensor> grads;
  for (NodeId id : leaves_) {
    grads.emplace(id, adj[id] ? *adj[id] : Tensor::zeros(nodes_[id].value.shape()));
  }
  for (auto& [id, g] : grads) g.check_finite("gradient of leaf '" + nodes_[id].name + "'");
  return grads;
}

GradCheckResult grad_check(Graph& g, NodeId output, double h, double tol) {
  std::map<NodeId, Tensor> base;
  for (NodeId id : g.leaves()) base.emplace(id, g.value(id));
  g.forward(base);
  auto grads = g.backward(output);

  GradCheckResult res;
  for (NodeId id : g.leaves()) {
    const Tensor& x0 = base.at(id);
    for (std::size_t i = 0; i < x0.numel(); ++i) {
      auto bind = base;
      bind.at(id).at(i) = x0.at(i) + h;
      g.forward(bind);
      double fp = g.value(output).item();
      bind.at(id).at(i) = x0.at(i) - h;
      g.forward(bind);
      double fm = g.value(output).item();
      double numeric = (fp - fm) / (2.0 * h);
      double analytic = grads.at(id).at(i);
      double rel = std::abs(analytic - numeric) /
                   std::max(1e-12, std::abs(analytic) + std::abs(numeric));
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = "leaf '" + g.node(id).name + "'[" + std::to_string(i) + "]";
      }
    }
  }
  g.forward(base);
  res.pass = res.max_rel_error < tol;
  return res;
}

}  // namespace genadapt
