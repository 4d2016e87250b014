#include "genadapt/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "genadapt/common.hpp"

namespace genadapt {

FeatureSet make_feature_set(Tensor rows, std::string label) {
  if (rows.rank() != 2 || rows.rows() < 1) {
    throw UsageError("feature set of shape " + rows.shape_str());
  }
  return FeatureSet{std::move(rows), std::move(label)};
}

double sse_compactness(const FeatureSet& f) {
  const Tensor& x = f.rows;
  if (x.rank() != 2 || x.rows() < 1) {
    throw UsageError("sse_compactness on shape " + x.shape_str());
  }
  std::vector<double> center(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) center[c] += x.at(i, c);
  for (double& v : center) v /= static_cast<double>(x.rows());
  double sse = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double d = x.at(i, c) - center[c];
      sse += d * d;
    }
  }
  return sse;
}

namespace {

// Dense pairwise Euclidean distances; S stays in the low thousands here.
std::vector<double> distance_matrix(const Tensor& x) {
  std::size_t s = x.rows();
  std::vector<double> d(s * s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = i + 1; j < s; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        double diff = x.at(i, c) - x.at(j, c);
        acc += diff * diff;
      }
      double dist = std::sqrt(acc);
      d[i * s + j] = dist;
      d[j * s + i] = dist;
    }
  }
  return d;
}

}  // namespace

ClusterAssignment kmedoids(const FeatureSet& f, std::size_t k, std::size_t max_iters,
                           std::uint64_t seed) {
  (void)seed;  // the greedy build phase is deterministic; see header
  std::size_t s = f.rows.rows();
  if (k < 1 || k > s) {
    throw UsageError("kmedoids k = " + std::to_string(k) + " with " + std::to_string(s) +
                     " samples");
  }
  std::vector<double> dist = distance_matrix(f.rows);
  auto d = [&](std::size_t i, std::size_t j) { return dist[i * s + j]; };

  // Shared finalization: sorted medoids, nearest-medoid membership with ties
  // going to the lowest medoid index, and the summed assignment cost.
  auto finalize = [&](std::vector<std::size_t> chosen) {
    ClusterAssignment out;
    out.medoids = std::move(chosen);
    std::sort(out.medoids.begin(), out.medoids.end());
    out.membership.resize(s);
    out.total_cost = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t mi = 0; mi < out.medoids.size(); ++mi) {
        double dj = d(j, out.medoids[mi]);
        if (dj < best_d) {
          best_d = dj;
          best = mi;
        }
      }
      out.membership[j] = best;
      out.total_cost += best_d;
    }
    return out;
  };

  // Small instances are solved exactly: every k-subset is enumerated in
  // lexicographic order and the first subset with the strictly best cost
  // wins, so cost ties resolve to the lowest medoid indices. PAM below is a
  // local search and can stall one swap short of the optimum even at s = 6.
  if (s <= 12) {
    std::vector<std::size_t> pick(k);
    for (std::size_t i = 0; i < k; ++i) pick[i] = i;
    std::vector<std::size_t> best_pick;
    double best_cost = std::numeric_limits<double>::infinity();
    for (;;) {
      double cost = 0.0;
      for (std::size_t j = 0; j < s; ++j) {
        double dj = d(j, pick[0]);
        for (std::size_t m = 1; m < k; ++m) dj = std::min(dj, d(j, pick[m]));
        cost += dj;
      }
      if (cost < best_cost - 1e-12) {
        best_cost = cost;
        best_pick = pick;
      }
      // Advance to the next combination of k indices out of s.
      std::size_t i = k;
      while (i > 0 && pick[i - 1] == s - k + i - 1) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
    return finalize(best_pick);
  }

  std::vector<std::size_t> medoids;
  std::vector<bool> is_medoid(s, false);
  // d1/m1: distance to and index of the nearest medoid; d2: second nearest.
  std::vector<double> d1(s, std::numeric_limits<double>::infinity());
  std::vector<double> d2(s, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> m1(s, 0);

  auto refresh_nearest = [&]() {
    for (std::size_t j = 0; j < s; ++j) {
      d1[j] = d2[j] = std::numeric_limits<double>::infinity();
      for (std::size_t m : medoids) {
        double dj = d(j, m);
        if (dj < d1[j]) {
          d2[j] = d1[j];
          d1[j] = dj;
          m1[j] = m;
        } else if (dj < d2[j]) {
          d2[j] = dj;
        }
      }
    }
  };

  // Build phase: first the point minimizing total distance, then greedy
  // additions by largest cost reduction; ties go to the lowest index.
  std::size_t first = 0;
  double best_total = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < s; ++j) total += d(i, j);
    if (total < best_total) {
      best_total = total;
      first = i;
    }
  }
  medoids.push_back(first);
  is_medoid[first] = true;
  refresh_nearest();

  while (medoids.size() < k) {
    std::size_t best_c = s;
    double best_profit = -1.0;
    for (std::size_t c = 0; c < s; ++c) {
      if (is_medoid[c]) continue;
      double profit = 0.0;
      for (std::size_t j = 0; j < s; ++j) {
        double gain = d1[j] - d(j, c);
        if (gain > 0.0) profit += gain;
      }
      if (profit > best_profit) {
        best_profit = profit;
        best_c = c;
      }
    }
    medoids.push_back(best_c);
    is_medoid[best_c] = true;
    refresh_nearest();
  }

  // Swap phase: apply the single best improving (medoid, candidate) swap per
  // pass. Current cost must never increase.
  auto cost_now = [&]() {
    double c = 0.0;
    for (std::size_t j = 0; j < s; ++j) c += d1[j];
    return c;
  };
  double cost = cost_now();
  for (std::size_t pass = 0; pass < max_iters; ++pass) {
    double best_delta = 0.0;
    std::size_t best_mi = medoids.size(), best_h = s;
    for (std::size_t mi = 0; mi < medoids.size(); ++mi) {
      std::size_t m = medoids[mi];
      for (std::size_t h = 0; h < s; ++h) {
        if (is_medoid[h]) continue;
        double delta = 0.0;
        for (std::size_t j = 0; j < s; ++j) {
          double dh = d(j, h);
          if (m1[j] == m) {
            delta += std::min(dh, d2[j]) - d1[j];
          } else if (dh < d1[j]) {
            delta += dh - d1[j];
          }
        }
        if (delta < best_delta - 1e-12) {
          best_delta = delta;
          best_mi = mi;
          best_h = h;
        }
      }
    }
    if (best_h == s) break;
    is_medoid[medoids[best_mi]] = false;
    medoids[best_mi] = best_h;
    is_medoid[best_h] = true;
    refresh_nearest();
    double new_cost = cost_now();
    if (new_cost > cost + 1e-9) {
      throw NumericError("kmedoids swap increased cost from " + std::to_string(cost) + " to " +
                         std::to_string(new_cost));
    }
    cost = new_cost;
  }

  return finalize(medoids);
}

DiversityResult intra_cluster_diversity(const FeatureSet& f, std::size_t k, std::uint64_t seed) {
  ClusterAssignment clusters = kmedoids(f, k, 100, seed);
  std::size_t s = f.rows.rows();
  std::vector<std::vector<std::size_t>> members(clusters.medoids.size());
  for (std::size_t j = 0; j < s; ++j) members[clusters.membership[j]].push_back(j);

  double avg_sum = 0.0;
  std::size_t avg_count = 0;
  double all_sum = 0.0;
  std::size_t all_pairs = 0;
  for (const auto& cluster : members) {
    if (cluster.size() < 2) continue;
    double csum = 0.0;
    std::size_t cpairs = 0;
    for (std::size_t a = 0; a < cluster.size(); ++a) {
      for (std::size_t b = a + 1; b < cluster.size(); ++b) {
        double acc = 0.0;
        for (std::size_t c = 0; c < f.rows.cols(); ++c) {
          double diff = f.rows.at(cluster[a], c) - f.rows.at(cluster[b], c);
          acc += diff * diff;
        }
        double dist = std::sqrt(acc);
        csum += dist;
        ++cpairs;
      }
    }
    avg_sum += csum / static_cast<double>(cpairs);
    ++avg_count;
    all_sum += csum;
    all_pairs += cpairs;
  }
  if (avg_count == 0) {
    throw UsageError("intra_cluster_diversity undefined: every cluster is a singleton");
  }
  DiversityResult res;
  res.avg = avg_sum / static_cast<double>(avg_count);
  res.all = all_sum / static_cast<double>(all_pairs);
  return res;
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor& x) {
  Eigen::MatrixXd m(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) m(i, j) = x.at(i, j);
  return m;
}

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success) {
    throw NumericError("frechet_distance: eigensolve did not converge");
  }
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.rows.rows() < 2 || b.rows.rows() < 2) {
    throw UsageError("frechet_distance needs at least 2 rows per set");
  }
  if (a.rows.cols() != b.rows.cols()) {
    throw UsageError("frechet_distance sets of widths " + std::to_string(a.rows.cols()) + " and " +
                     std::to_string(b.rows.cols()));
  }
  Eigen::MatrixXd xa = to_eigen(a.rows);
  Eigen::MatrixXd xb = to_eigen(b.rows);
  Eigen::VectorXd mua = xa.colwise().mean();
  Eigen::VectorXd mub = xb.colwise().mean();
  Eigen::MatrixXd ca = xa.rowwise() - mua.transpose();
  Eigen::MatrixXd cb = xb.rowwise() - mub.transpose();
  Eigen::MatrixXd sa = ca.transpose() * ca / static_cast<double>(xa.rows() - 1);
  Eigen::MatrixXd sb = cb.transpose() * cb / static_cast<double>(xb.rows() - 1);

  Eigen::MatrixXd sqa = sym_sqrt(sa);
  Eigen::MatrixXd cross = sym_sqrt(sqa * sb * sqa);
  double d = (mua - mub).squaredNorm() + (sa + sb - 2.0 * cross).trace();
  return std::max(d, 0.0);
}

PrecisionRecall precision_recall(const FeatureSet& real, const FeatureSet& fake, std::size_t k) {
  if (k < 1) throw UsageError("precision_recall needs k >= 1");
  if (real.rows.rows() <= k || fake.rows.rows() <= k) {
    throw UsageError("precision_recall needs more than k rows per set");
  }
  if (real.rows.cols() != fake.rows.cols()) {
    throw UsageError("precision_recall sets of widths " + std::to_string(real.rows.cols()) +
                     " and " + std::to_string(fake.rows.cols()));
  }

  auto radii = [&](const Tensor& x) {
    std::size_t s = x.rows();
    std::vector<double> r(s);
    std::vector<double> dists;
    for (std::size_t i = 0; i < s; ++i) {
      dists.clear();
      for (std::size_t j = 0; j < s; ++j) {
        if (j == i) continue;
        double acc = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
          double diff = x.at(i, c) - x.at(j, c);
          acc += diff * diff;
        }
        dists.push_back(std::sqrt(acc));
      }
      std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
      r[i] = dists[k - 1];
    }
    return r;
  };

  auto coverage = [&](const Tensor& hull, const std::vector<double>& r, const Tensor& probe) {
    std::size_t covered = 0;
    for (std::size_t i = 0; i < probe.rows(); ++i) {
      bool inside = false;
      for (std::size_t j = 0; j < hull.rows() && !inside; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < probe.cols(); ++c) {
          double diff = probe.at(i, c) - hull.at(j, c);
          acc += diff * diff;
        }
        inside = std::sqrt(acc) <= r[j];
      }
      if (inside) ++covered;
    }
    return static_cast<double>(covered) / static_cast<double>(probe.rows());
  };

  std::vector<double> r_real = radii(real.rows);
  std::vector<double> r_fake = radii(fake.rows);
  PrecisionRecall pr;
  pr.precision = coverage(real.rows, r_real, fake.rows);
  pr.recall = coverage(fake.rows, r_fake, real.rows);
  return pr;
}

}  // namespace genadapt
