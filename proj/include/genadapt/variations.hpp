#pragma once

#include <cstdint>
#include <vector>

#include "genadapt/autodiff.hpp"
#include "genadapt/rng.hpp"
#include "genadapt/tensor.hpp"

namespace genadapt {

// K learned perturbations of a target embedding. Each derived variation is
// target + epsilon * z / ||z||, so every variation sits on a sphere of
// radius epsilon around the target no matter what training does to z.
struct VariationSet {
  Tensor target;  // rank 1, D
  Tensor z;       // K x D
  double epsilon = 0.0;

  std::size_t count() const { return z.rows(); }
  Tensor variation(std::size_t i) const;  // rank 1, D
  Tensor variations() const;              // K x D
};

VariationSet make_variation_set(Tensor target, Tensor z, double epsilon);

Tensor perturb(const Tensor& target, const Tensor& z, double epsilon);
NodeId perturb_node(Graph& g, NodeId target, NodeId z, double epsilon);

// (1/K) sum_i (1 - cos(target, v_i)).
double loss_cons(const Tensor& target, const Tensor& v);  // v: K x D
// Mean |cos(z_i, z_j)| over unordered pairs; 0 with a warning for K < 2.
double loss_div(const Tensor& z);

struct Stage1Config {
  std::int64_t iters = 2000;
  double lr = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double lambda_div = 1.0;
  std::int64_t log_every = 100;
  std::uint64_t seed = 20;
};

struct Stage1LogRow {
  std::int64_t iter;
  double cons;
  double div;
};

struct Stage1Result {
  VariationSet set;
  std::vector<Stage1LogRow> log;
};

// Optimizes Z under loss_cons(target, perturb(...)) + lambda_div * loss_div(Z).
// epsilon <= 0 selects the default ||target||.
Stage1Result learn_variations(const Tensor& target, std::size_t k, double epsilon,
                              const Stage1Config& cfg);

}  // namespace genadapt
