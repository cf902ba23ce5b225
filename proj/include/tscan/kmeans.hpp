#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "tscan/cluster_head.hpp"
#include "tscan/embeddings.hpp"
#include "tscan/error.hpp"
#include "tscan/random.hpp"

namespace tscan {

struct KMeansOptions {
  std::size_t max_iters = 300;
  double tol = 1e-6;
};

struct KMeansResult {
  RowMatrix centroids;
  /// Confidence of each point is 1 / (1 + distance to its centroid).
  AssignmentTable assignments;
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  /// Inertia after every assignment step, final assignment last.
  std::vector<double> inertia_history;
};

namespace detail {

struct Partition {
  std::vector<int> label;
  std::vector<double> dist2;
  double inertia = 0.0;
};

inline Partition assign_nearest(const RowMatrix& points, const RowMatrix& centroids) {
  Partition part;
  const auto n = points.rows();
  part.label.resize(static_cast<std::size_t>(n));
  part.dist2.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    part.label[static_cast<std::size_t>(i)] = arg;
    part.dist2[static_cast<std::size_t>(i)] = best;
    part.inertia += best;
  }
  return part;
}

inline RowMatrix kmeans_plus_plus(const RowMatrix& points, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  RowMatrix centroids(static_cast<Eigen::Index>(k), points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.index(n)));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - centroids.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
      total += d2[i];
    }
    const std::size_t pick = total > 0.0 ? rng.categorical(d2) : rng.index(n);
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
  }
  return centroids;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. An emptied cluster is reseeded
/// at the point farthest from its current centroid.
inline KMeansResult kmeans(const EmbeddingSet& set, std::size_t k, std::uint64_t seed,
                           const KMeansOptions& options = {}) {
  require_normalized(set);
  const std::size_t n = set.count();
  if (k < 1) throw config_error("k-means: k must be >= 1");
  if (k > n) throw config_error("k-means: k exceeds the number of points");

  Rng rng(seed);
  const RowMatrix& pts = set.vectors;
  KMeansResult result;
  result.centroids = detail::kmeans_plus_plus(pts, k, rng);

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    const auto part = detail::assign_nearest(pts, result.centroids);
    result.inertia_history.push_back(part.inertia);
    ++result.iterations_run;

    RowMatrix next = RowMatrix::Zero(static_cast<Eigen::Index>(k), pts.cols());
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      next.row(part.label[i]) += pts.row(static_cast<Eigen::Index>(i));
      ++sizes[static_cast<std::size_t>(part.label[i])];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) {
        next.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(sizes[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && part.dist2[i] > far_d) {
          far_d = part.dist2[i];
          far = i;
        }
      taken[far] = true;
      next.row(static_cast<Eigen::Index>(c)) = pts.row(static_cast<Eigen::Index>(far));
    }
    const double shift = (next - result.centroids).rowwise().norm().maxCoeff();
    result.centroids = std::move(next);
    if (shift < options.tol) break;
  }

  const auto part = detail::assign_nearest(pts, result.centroids);
  result.inertia = part.inertia;
  result.inertia_history.push_back(part.inertia);
  for (std::size_t i = 0; i < n; ++i)
    result.assignments.rows.push_back({set.ids[i], part.label[i], 1.0 / (1.0 + std::sqrt(part.dist2[i]))});
  return result;
}

/// Best (lowest inertia) of `restarts` runs seeded seed, seed + 1, ...
inline KMeansResult kmeans_restarts(const EmbeddingSet& set, std::size_t k, std::uint64_t seed,
                                    std::size_t restarts, const KMeansOptions& options = {}) {
  KMeansResult best = kmeans(set, k, seed, options);
  for (std::size_t r = 1; r < restarts; ++r) {
    auto run = kmeans(set, k, seed + r, options);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

}  // namespace tscan
