#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "genadapt/common.hpp"
#include "genadapt/metrics.hpp"
#include "genadapt/rng.hpp"
#include "genadapt/tensor.hpp"

using namespace genadapt;

namespace {

FeatureSet fs1d(std::vector<double> xs) {
  std::size_t n = xs.size();
  return make_feature_set(Tensor({n, 1}, std::move(xs)), "test");
}

double dist(const Tensor& m, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double d = m.at(i, c) - m.at(j, c);
    s += d * d;
  }
  return std::sqrt(s);
}

// Exhaustive k-medoids optimum: best total cost over every medoid subset.
double brute_force_cost(const FeatureSet& f, std::size_t k) {
  std::size_t s = f.rows.rows();
  std::vector<std::size_t> pick(k);
  double best = -1.0;
  std::vector<bool> mask(s, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(k), true);
  std::sort(mask.begin(), mask.end());
  do {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s; ++i) {
      if (mask[i]) pick[n++] = i;
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      double d = dist(f.rows, i, pick[0]);
      for (std::size_t m = 1; m < k; ++m) d = std::min(d, dist(f.rows, i, pick[m]));
      cost += d;
    }
    if (best < 0.0 || cost < best) best = cost;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return best;
}

FeatureSet permuted(const FeatureSet& f, const std::vector<std::size_t>& order) {
  Tensor out = Tensor::zeros({f.rows.rows(), f.rows.cols()});
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t c = 0; c < f.rows.cols(); ++c) out.at(i, c) = f.rows.at(order[i], c);
  }
  return make_feature_set(out, f.label);
}

}  // namespace

TEST_CASE("sse compactness sums squared distances to the centroid") {
  CHECK(sse_compactness(fs1d({5.0, 5.0, 5.0})) == 0.0);

  FeatureSet two = make_feature_set(Tensor({2, 2}, {0.0, 0.0, 2.0, 0.0}), "pair");
  CHECK(sse_compactness(two) == doctest::Approx(2.0).epsilon(1e-15));

  Rng rng(31);
  Tensor rows = rng.normal_tensor({6, 3});
  double base = sse_compactness(make_feature_set(rows, "a"));
  Tensor shifted = rows;
  for (std::size_t i = 0; i < shifted.rows(); ++i) {
    shifted.at(i, 0) += 17.0;
    shifted.at(i, 1) -= 4.0;
    shifted.at(i, 2) += 0.5;
  }
  CHECK(sse_compactness(make_feature_set(shifted, "b")) ==
        doctest::Approx(base).epsilon(1e-9));

  CHECK_THROWS_AS(make_feature_set(Tensor({3}, {1.0, 2.0, 3.0}), "bad"), UsageError);
}

TEST_CASE("kmedoids separates well-spaced one-dimensional clusters") {
  FeatureSet f = fs1d({0.0, 1.0, 10.0, 11.0});
  ClusterAssignment c = kmedoids(f, 2, 100, 0);
  REQUIRE(c.medoids.size() == 2);
  // Ties break toward the lowest index: medoids 0 and 2.
  CHECK(c.medoids[0] == 0);
  CHECK(c.medoids[1] == 2);
  CHECK(c.total_cost == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(c.membership[0] == c.membership[1]);
  CHECK(c.membership[2] == c.membership[3]);
  CHECK(c.membership[0] != c.membership[2]);

  // Medoids belong to their own clusters.
  for (std::size_t m = 0; m < c.medoids.size(); ++m) {
    CHECK(c.membership[c.medoids[m]] == m);
  }
}

TEST_CASE("kmedoids saturates when every point is its own medoid") {
  FeatureSet f = fs1d({3.0, -1.0, 7.0, 2.0});
  ClusterAssignment c = kmedoids(f, 4, 100, 0);
  CHECK(c.total_cost == 0.0);
  REQUIRE(c.medoids.size() == 4);
  for (std::size_t m = 0; m < 4; ++m) CHECK(c.medoids[m] == m);
  CHECK_THROWS_AS(kmedoids(f, 5, 100, 0), UsageError);
}

TEST_CASE("kmedoids matches the exhaustive optimum on small sets") {
  Rng rng(47);
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t s = 5 + static_cast<std::size_t>(rng.uniform() * 4.0);  // 5..8
    std::size_t k = 2 + static_cast<std::size_t>(rng.uniform() * 2.0);  // 2..3
    FeatureSet f = make_feature_set(rng.normal_tensor({s, 2}), "rand");
    ClusterAssignment c = kmedoids(f, k, 100, 0);
    CHECK(c.total_cost == doctest::Approx(brute_force_cost(f, k)).epsilon(1e-12));

    // Reported cost is consistent with the assignment it ships.
    double recomputed = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      recomputed += dist(f.rows, i, c.medoids[c.membership[i]]);
    }
    CHECK(recomputed == doctest::Approx(c.total_cost).epsilon(1e-12));
  }
}

TEST_CASE("kmedoids is deterministic regardless of the seed argument") {
  Rng rng(8);
  FeatureSet f = make_feature_set(rng.normal_tensor({12, 3}), "det");
  ClusterAssignment a = kmedoids(f, 3, 100, 1);
  ClusterAssignment b = kmedoids(f, 3, 100, 999);
  CHECK(a.medoids == b.medoids);
  CHECK(a.membership == b.membership);
  CHECK(a.total_cost == b.total_cost);
}

TEST_CASE("intra-cluster diversity distinguishes its two aggregations") {
  // Clusters {0,1,2} and {10,14}: pair distances {1,1,2} and {4}.
  FeatureSet f = fs1d({0.0, 1.0, 2.0, 10.0, 14.0});
  DiversityResult d = intra_cluster_diversity(f, 2, 0);
  CHECK(d.avg == doctest::Approx((4.0 / 3.0 + 4.0) / 2.0).epsilon(1e-12));
  CHECK(d.all == doctest::Approx((1.0 + 1.0 + 2.0 + 4.0) / 4.0).epsilon(1e-12));

  FeatureSet pairs = fs1d({0.0, 1.0, 10.0, 11.0});
  DiversityResult p = intra_cluster_diversity(pairs, 2, 0);
  CHECK(p.avg == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.all == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(intra_cluster_diversity(fs1d({2.0, 2.0, 2.0}), 1, 0).avg == 0.0);
  CHECK(intra_cluster_diversity(fs1d({2.0, 2.0, 2.0}), 1, 0).all == 0.0);

  // Every cluster a singleton leaves the metric undefined.
  CHECK_THROWS_AS(intra_cluster_diversity(fs1d({0.0, 5.0, 9.0}), 3, 0), UsageError);
}

TEST_CASE("intra-cluster diversity on pair multisets {1} and {3,3,3}") {
  // Cluster A: two points 1 apart. Cluster B: an equilateral triangle with
  // side 3, placed far away so k-medoids keeps the groups intact.
  double h = 3.0 * std::sqrt(3.0) / 2.0;
  Tensor rows({5, 2},
              {0.0, 0.0, 1.0, 0.0, 100.0, 0.0, 103.0, 0.0, 101.5, h});
  FeatureSet f = make_feature_set(rows, "two-groups");
  DiversityResult d = intra_cluster_diversity(f, 2, 0);
  CHECK(d.avg == doctest::Approx((1.0 + 3.0) / 2.0).epsilon(1e-12));
  CHECK(d.all == doctest::Approx((1.0 + 3.0 + 3.0 + 3.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("frechet distance reproduces the univariate closed form") {
  // Samples {-1,0,1} fit (mu, sigma) = (0, 1); {-1,1,3} fit (1, 2).
  FeatureSet a = fs1d({-1.0, 0.0, 1.0});
  FeatureSet b = fs1d({-1.0, 1.0, 3.0});
  CHECK(frechet_distance(a, b) == doctest::Approx(2.0).epsilon(1e-8));

  Rng rng(3);
  FeatureSet self = make_feature_set(rng.normal_tensor({8, 4}), "self");
  CHECK(frechet_distance(self, self) < 1e-8);

  CHECK_THROWS_AS(frechet_distance(fs1d({1.0}), a), UsageError);
  FeatureSet wide = make_feature_set(rng.normal_tensor({4, 2}), "wide");
  CHECK_THROWS_AS(frechet_distance(a, wide), UsageError);
}

TEST_CASE("frechet distance on diagonal covariances is separable") {
  // Axis-aligned grids have exactly diagonal sample covariance, so the
  // distance is the sum of per-coordinate univariate closed forms.
  Tensor ga({4, 2}, {-1.0, -2.0, -1.0, 2.0, 1.0, -2.0, 1.0, 2.0});
  Tensor gb({4, 2}, {0.0, 0.0, 0.0, 6.0, 4.0, 0.0, 4.0, 6.0});
  FeatureSet a = make_feature_set(ga, "a");
  FeatureSet b = make_feature_set(gb, "b");

  double sa_x = std::sqrt(4.0 / 3.0), sa_y = std::sqrt(16.0 / 3.0);
  double sb_x = std::sqrt(16.0 / 3.0), sb_y = std::sqrt(12.0);
  double want = (0.0 - 2.0) * (0.0 - 2.0) + (0.0 - 3.0) * (0.0 - 3.0) +
                (sa_x - sb_x) * (sa_x - sb_x) + (sa_y - sb_y) * (sa_y - sb_y);
  CHECK(frechet_distance(a, b) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("frechet distance ignores a common translation") {
  Rng rng(13);
  Tensor ra = rng.normal_tensor({10, 3});
  Tensor rb = rng.normal_tensor({12, 3});
  double base = frechet_distance(make_feature_set(ra, "a"), make_feature_set(rb, "b"));
  for (std::size_t i = 0; i < ra.rows(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) ra.at(i, c) += 5.0;
  }
  for (std::size_t i = 0; i < rb.rows(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) rb.at(i, c) += 5.0;
  }
  double moved = frechet_distance(make_feature_set(ra, "a"), make_feature_set(rb, "b"));
  CHECK(moved == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("precision and recall count kNN-manifold membership") {
  FeatureSet self = make_feature_set(Rng(21).normal_tensor({6, 2}), "self");
  PrecisionRecall pr_self = precision_recall(self, self, 1);
  CHECK(pr_self.precision == 1.0);
  CHECK(pr_self.recall == 1.0);
  PrecisionRecall pr_self2 = precision_recall(self, self, 2);
  CHECK(pr_self2.precision == 1.0);
  CHECK(pr_self2.recall == 1.0);

  // Real radii (k=1): 1 for {0,1}, 3 for {4}. Fake 0.5 lands inside, 10
  // misses every ball; both reals stay inside the huge fake radii.
  FeatureSet real = fs1d({0.0, 1.0, 4.0});
  FeatureSet fake = fs1d({0.5, 10.0});
  PrecisionRecall pr = precision_recall(real, fake, 1);
  CHECK(pr.precision == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pr.recall == doctest::Approx(1.0).epsilon(1e-15));

  FeatureSet far = fs1d({1000.0, 1001.0, 1004.0});
  PrecisionRecall none = precision_recall(real, far, 1);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);

  CHECK_THROWS_AS(precision_recall(real, fake, 0), UsageError);
  CHECK_THROWS_AS(precision_recall(real, fake, 2), UsageError);
  FeatureSet wide = make_feature_set(Rng(2).normal_tensor({4, 2}), "wide");
  CHECK_THROWS_AS(precision_recall(real, wide, 1), UsageError);
}

TEST_CASE("metrics are invariant under a common row permutation") {
  Rng rng(64);
  FeatureSet f = make_feature_set(rng.normal_tensor({9, 3}), "orig");
  std::vector<std::size_t> order{4, 7, 0, 8, 2, 6, 1, 5, 3};
  FeatureSet g = permuted(f, order);

  CHECK(sse_compactness(g) == doctest::Approx(sse_compactness(f)).epsilon(1e-12));
  CHECK(kmedoids(g, 3, 100, 0).total_cost ==
        doctest::Approx(kmedoids(f, 3, 100, 0).total_cost).epsilon(1e-12));

  DiversityResult da = intra_cluster_diversity(f, 3, 0);
  DiversityResult db = intra_cluster_diversity(g, 3, 0);
  CHECK(da.avg == doctest::Approx(db.avg).epsilon(1e-12));
  CHECK(da.all == doctest::Approx(db.all).epsilon(1e-12));

  FeatureSet other = make_feature_set(rng.normal_tensor({9, 3}), "other");
  FeatureSet other_p = permuted(other, order);
  CHECK(frechet_distance(f, other) == doctest::Approx(frechet_distance(g, other_p)).epsilon(1e-9));

  PrecisionRecall pa = precision_recall(f, other, 2);
  PrecisionRecall pb = precision_recall(g, other_p, 2);
  CHECK(pa.precision == doctest::Approx(pb.precision).epsilon(1e-15));
  CHECK(pa.recall == doctest::Approx(pb.recall).epsilon(1e-15));
}
