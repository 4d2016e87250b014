#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genadapt/tensor.hpp"

namespace genadapt {

struct FeatureSet {
  Tensor rows;  // S x D
  std::string label;
};

FeatureSet make_feature_set(Tensor rows, std::string label);

// Sum of squared distances to the column mean. Falls as samples collapse.
double sse_compactness(const FeatureSet& f);

struct ClusterAssignment {
  std::vector<std::size_t> medoids;     // sorted ascending
  std::vector<std::size_t> membership;  // index into medoids, nearest wins
  double total_cost = 0.0;              // sum of distances to assigned medoid
};

// Instances of at most 12 samples are solved exactly by enumerating all
// k-subsets; larger ones use PAM (greedy build, then best-improvement swaps
// until none improves or max_iters swap passes elapse). Euclidean distance;
// every tie is broken toward the lowest index, which makes the result
// deterministic. The seed is accepted for interface stability but both paths
// are deterministic and ignore it.
ClusterAssignment kmedoids(const FeatureSet& f, std::size_t k, std::size_t max_iters,
                           std::uint64_t seed);

struct DiversityResult {
  double avg = 0.0;  // unweighted mean over clusters with >= 2 members
  double all = 0.0;  // mean over the pooled intra-cluster pairs
};

DiversityResult intra_cluster_diversity(const FeatureSet& f, std::size_t k, std::uint64_t seed);

// Frechet distance between Gaussian fits (unbiased covariance):
// ||muA - muB||^2 + tr(SA + SB - 2 (SA^1/2 SB SA^1/2)^1/2).
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

// kNN-manifold estimator: a fake row is precise when it lies within the
// k-th-neighbor radius of at least one real row; recall swaps the roles.
PrecisionRecall precision_recall(const FeatureSet& real, const FeatureSet& fake, std::size_t k);

}  // namespace genadapt
