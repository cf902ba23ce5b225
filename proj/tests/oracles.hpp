#pragma once

// Independent reference computations for the test suites. Nothing here calls
// into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "tscan/cluster_head.hpp"
#include "tscan/embeddings.hpp"
#include "tscan/random.hpp"

namespace oracle {

using tscan::RowMatrix;

/// O(n^2) kNN with plain loops: returns indices per anchor.
inline std::vector<std::vector<std::size_t>> brute_force_knn(const RowMatrix& x, std::size_t k) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      double dot = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c)
        dot += x(static_cast<Eigen::Index>(a), c) * x(static_cast<Eigen::Index>(j), c);
      all.emplace_back(-dot, j);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < k; ++i) out[a].push_back(all[i].second);
  }
  return out;
}

/// SCAN total loss written out directly from its definition.
inline double scan_total(const tscan::ClusterHead& head, const RowMatrix& anchors, const RowMatrix& neighbors,
                         double entropy_weight, double eps) {
  auto probs = [&](const RowMatrix& x, Eigen::Index i) {
    std::vector<double> z(static_cast<std::size_t>(head.weights.rows()));
    for (Eigen::Index c = 0; c < head.weights.rows(); ++c) {
      double s = head.bias(c);
      for (Eigen::Index j = 0; j < x.cols(); ++j) s += head.weights(c, j) * x(i, j);
      z[static_cast<std::size_t>(c)] = s;
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double tot = 0.0;
    for (double& v : z) tot += (v = std::exp(v - mx));
    for (double& v : z) v /= tot;
    return z;
  };
  const auto b = anchors.rows();
  std::vector<double> mean(static_cast<std::size_t>(head.weights.rows()), 0.0);
  double cons = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto p = probs(anchors, i);
    const auto q = probs(neighbors, i);
    double sim = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      sim += p[c] * q[c];
      mean[c] += p[c] / static_cast<double>(b);
    }
    cons += -std::log(std::clamp(sim, eps, 1.0));
  }
  cons /= static_cast<double>(b);
  double ent = 0.0;
  for (double m : mean) ent -= m * std::log(std::clamp(m, eps, 1.0));
  return cons - entropy_weight * ent;
}

/// Central-difference gradient of `f` over every head parameter.
inline tscan::ClusterHead finite_difference(const tscan::ClusterHead& head,
                                            const std::function<double(const tscan::ClusterHead&)>& f,
                                            double h = 1e-5) {
  tscan::ClusterHead g = tscan::ClusterHead::zeros(head.dim(), head.num_clusters());
  tscan::ClusterHead probe = head;
  for (Eigen::Index c = 0; c < head.weights.rows(); ++c) {
    for (Eigen::Index j = 0; j < head.weights.cols(); ++j) {
      const double w = head.weights(c, j);
      probe.weights(c, j) = w + h;
      const double up = f(probe);
      probe.weights(c, j) = w - h;
      const double down = f(probe);
      probe.weights(c, j) = w;
      g.weights(c, j) = (up - down) / (2.0 * h);
    }
    const double bv = head.bias(c);
    probe.bias(c) = bv + h;
    const double up = f(probe);
    probe.bias(c) = bv - h;
    const double down = f(probe);
    probe.bias(c) = bv;
    g.bias(c) = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||) over all parameters.
inline double relative_error(const tscan::ClusterHead& a, const tscan::ClusterHead& b) {
  const double diff = std::sqrt((a.weights - b.weights).squaredNorm() + (a.bias - b.bias).squaredNorm());
  const double na = std::sqrt(a.weights.squaredNorm() + a.bias.squaredNorm());
  const double nb = std::sqrt(b.weights.squaredNorm() + b.bias.squaredNorm());
  const double denom = std::max({na, nb, 1e-12});
  return diff / denom;
}

/// Minimum within-cluster sum of squares over every labeling of the rows
/// into at most k groups.
inline double exhaustive_kmeans_optimum(const RowMatrix& x, std::size_t k) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    double sse = 0.0;
    for (std::size_t g = 0; g < k; ++g) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (label[i] == g) {
          mean += x.row(static_cast<Eigen::Index>(i));
          ++cnt;
        }
      if (cnt == 0) continue;
      mean /= static_cast<double>(cnt);
      for (std::size_t i = 0; i < n; ++i)
        if (label[i] == g) sse += (x.row(static_cast<Eigen::Index>(i)) - mean).squaredNorm();
    }
    best = std::min(best, sse);
    std::size_t pos = 0;
    while (pos < n && ++label[pos] == k) label[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

/// Best matched mass over all injections of states into clusters, by
/// enumerating permutations of the cluster indices.
inline std::size_t brute_force_matching(const std::vector<std::vector<std::size_t>>& contingency_cluster_state) {
  const std::size_t clusters = contingency_cluster_state.size();
  const std::size_t states = clusters ? contingency_cluster_state[0].size() : 0;
  std::vector<std::size_t> perm(clusters);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t best = 0;
  do {
    std::size_t s = 0;
    for (std::size_t st = 0; st < states && st < clusters; ++st) s += contingency_cluster_state[perm[st]][st];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Random normalized set with seeded Gaussian rows.
inline tscan::EmbeddingSet random_unit_set(std::size_t n, std::size_t dim, std::uint64_t seed) {
  tscan::Rng rng(seed);
  tscan::EmbeddingSet set;
  set.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    set.ids.push_back("u" + std::to_string(i));
    for (std::size_t c = 0; c < dim; ++c)
      set.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rng.normal();
    set.vectors.row(static_cast<Eigen::Index>(i)).normalize();
  }
  set.normalized = true;
  return set;
}

}  // namespace oracle
