#include "genadapt/variations.hpp"

#include <cmath>
#include <string>

#include "genadapt/common.hpp"
#include "genadapt/optim.hpp"

namespace genadapt {

Tensor VariationSet::variation(std::size_t i) const {
  if (i >= count()) throw UsageError("variation index " + std::to_string(i) + " out of range");
  Tensor zi = Tensor::zeros({z.cols()});
  for (std::size_t c = 0; c < z.cols(); ++c) zi.at(c) = z.at(i, c);
  Tensor v = perturb(target, zi, epsilon);
  return v;
}

Tensor VariationSet::variations() const {
  Tensor out = Tensor::zeros({count(), z.cols()});
  for (std::size_t i = 0; i < count(); ++i) {
    Tensor v = variation(i);
    for (std::size_t c = 0; c < z.cols(); ++c) out.at(i, c) = v.at(c);
  }
  return out;
}

VariationSet make_variation_set(Tensor target, Tensor z, double epsilon) {
  if (target.rank() != 1) {
    throw UsageError("variation target must be rank 1, got " + target.shape_str());
  }
  if (z.rank() != 2 || z.rows() < 1 || z.cols() != target.numel()) {
    throw UsageError("variation Z of shape " + z.shape_str() + " does not fit target " +
                     target.shape_str());
  }
  if (!(epsilon > 0.0)) throw UsageError("variation epsilon must be > 0");
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double n = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) n += z.at(i, c) * z.at(i, c);
    if (std::sqrt(n) <= kRowGuard) {
      throw NumericError("variation row " + std::to_string(i) + " is degenerate");
    }
  }
  return VariationSet{std::move(target), std::move(z), epsilon};
}

Tensor perturb(const Tensor& target, const Tensor& z, double epsilon) {
  if (!(epsilon > 0.0)) throw UsageError("perturb epsilon must be > 0");
  if (z.numel() != target.numel()) {
    throw UsageError("perturb z of shape " + z.shape_str() + " vs target " + target.shape_str());
  }
  double n = l2_norm(z);
  if (n <= kRowGuard) throw NumericError("degenerate perturbation: ||z|| <= 1e-8");
  Tensor v = Tensor::zeros(target.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v.at(i) = target.at(i) + epsilon * z.at(i) / n;
  return v;
}

NodeId perturb_node(Graph& g, NodeId target, NodeId z, double epsilon) {
  if (!(epsilon > 0.0)) throw UsageError("perturb epsilon must be > 0");
  if (l2_norm(g.value(z)) <= kRowGuard) {
    throw NumericError("degenerate perturbation: ||z|| <= 1e-8");
  }
  // 1/||z|| composed from the primitive set as exp(-log(||z||)).
  NodeId inv_norm = g.exp(g.scale(-1.0, g.log(g.l2norm(z))));
  NodeId unit = g.scale(inv_norm, z);
  return g.add(target, g.scale(epsilon, unit));
}

double loss_cons(const Tensor& target, const Tensor& v) {
  if (v.rank() != 2 || v.rows() < 1 || v.cols() != target.numel()) {
    throw UsageError("loss_cons variations of shape " + v.shape_str());
  }
  if (l2_norm(target) <= kNormGuard) {
    throw NumericError("loss_cons target embedding is degenerate");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i) {
    s += 1.0 - guarded_cosine(target, take_row(v, i));
  }
  return s / static_cast<double>(v.rows());
}

double loss_div(const Tensor& z) {
  if (z.rank() != 2) throw UsageError("loss_div on shape " + z.shape_str());
  if (z.rows() < 2) {
    warn("loss_div over fewer than 2 rows has no pairs; returning 0");
    return 0.0;
  }
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = i + 1; j < z.rows(); ++j) {
      s += std::abs(guarded_cosine(take_row(z, i), take_row(z, j)));
      ++pairs;
    }
  }
  return s / static_cast<double>(pairs);
}

Stage1Result learn_variations(const Tensor& target, std::size_t k, double epsilon,
                              const Stage1Config& cfg) {
  if (target.rank() != 1) {
    throw UsageError("learn_variations target must be rank 1, got " + target.shape_str());
  }
  std::size_t d = target.numel();
  if (k < 1) throw UsageError("learn_variations needs K >= 1");
  if (k > d) {
    throw UsageError("K = " + std::to_string(k) + " exceeds embedding dimension " +
                     std::to_string(d) + "; orthogonal variations are infeasible");
  }
  double tnorm = l2_norm(target);
  if (tnorm <= kNormGuard) throw NumericError("learn_variations target embedding is degenerate");
  double eps = epsilon > 0.0 ? epsilon : tnorm;
  if (cfg.iters < 0) throw UsageError("learn_variations iters must be >= 0");

  Rng init_rng = Rng(cfg.seed).derive("stage1-init");
  std::vector<Tensor> zrows;
  for (std::size_t i = 0; i < k; ++i) zrows.push_back(init_rng.normal_tensor({d}));

  Stage1Result res;
  AdamState state = make_adam_state(zrows);
  std::size_t pairs = k >= 2 ? k * (k - 1) / 2 : 0;

  for (std::int64_t iter = 0; iter < cfg.iters; ++iter) {
    Graph g;
    NodeId t = g.constant(target);
    NodeId one = g.constant(1.0);
    std::vector<NodeId> zl;
    for (std::size_t i = 0; i < k; ++i) zl.push_back(g.leaf("z" + std::to_string(i), zrows[i]));

    NodeId cons_acc = 0;
    bool have_cons = false;
    for (std::size_t i = 0; i < k; ++i) {
      NodeId v = perturb_node(g, t, zl[i], eps);
      NodeId term = g.sub(one, g.cosine(t, v));
      cons_acc = have_cons ? g.add(cons_acc, term) : term;
      have_cons = true;
    }
    NodeId cons = g.scale(1.0 / static_cast<double>(k), cons_acc);

    NodeId loss = cons;
    double div_value = 0.0;
    if (pairs > 0) {
      NodeId div_acc = 0;
      bool have_div = false;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
          NodeId c = g.cosine(zl[i], zl[j]);
          // |c| = exp(0.5 log(c^2)); the log guard makes the slope 0 at c = 0.
          NodeId a = g.exp(g.scale(0.5, g.log(g.mul(c, c))));
          div_acc = have_div ? g.add(div_acc, a) : a;
          have_div = true;
        }
      }
      NodeId div = g.scale(1.0 / static_cast<double>(pairs), div_acc);
      div_value = g.value(div).item();
      loss = g.add(cons, g.scale(cfg.lambda_div, div));
    }

    std::map<NodeId, Tensor> grads;
    try {
      grads = g.backward(loss);
    } catch (NumericError& e) {
      throw NumericError("stage 1 iteration " + std::to_string(iter) + ": " + e.what());
    }
    if (cfg.log_every > 0 && (iter % cfg.log_every == 0 || iter + 1 == cfg.iters)) {
      res.log.push_back(Stage1LogRow{iter, g.value(cons).item(), div_value});
    }
    std::vector<Tensor> grad_list;
    for (NodeId id : zl) grad_list.push_back(grads.at(id));
    adam_step(zrows, grad_list, state, cfg.lr, cfg.beta1, cfg.beta2);

    for (std::size_t i = 0; i < k; ++i) {
      double n = l2_norm(zrows[i]);
      if (n < kRowGuard) {
        warn("stage 1 row " + std::to_string(i) + " collapsed to norm " + std::to_string(n) +
             "; re-normalizing to unit length");
        if (n > 0.0) {
          for (std::size_t c = 0; c < d; ++c) zrows[i].at(c) /= n;
        } else {
          zrows[i] = Tensor::zeros({d});
          zrows[i].at(0) = 1.0;
        }
      }
    }
  }

  Tensor z = Tensor::zeros({k, d});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = 0; c < d; ++c) z.at(i, c) = zrows[i].at(c);
  res.set = make_variation_set(target, std::move(z), eps);
  return res;
}

}  // namespace genadapt
