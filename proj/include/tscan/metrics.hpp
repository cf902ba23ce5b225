#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "tscan/cluster_head.hpp"
#include "tscan/corpus.hpp"
#include "tscan/error.hpp"

namespace tscan {

struct DistributionReport {
  double score = 0.0;      // sum x ln x over membership ratios
  double ideal = 0.0;      // ln(1/C)
  double deviation = 0.0;  // score - ideal
  std::vector<std::size_t> cluster_sizes;
};

inline DistributionReport distribution_from_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) throw config_error("distribution score needs C >= 1");
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total == 0) throw input_error("distribution score of an empty assignment");
  DistributionReport r;
  r.cluster_sizes = sizes;
  for (auto s : sizes) {
    if (s == 0) continue;
    const double x = static_cast<double>(s) / static_cast<double>(total);
    r.score += x * std::log(x);
  }
  r.ideal = std::log(1.0 / static_cast<double>(sizes.size()));
  r.deviation = r.score - r.ideal;
  return r;
}

inline DistributionReport distribution_score(const AssignmentTable& assignments, std::size_t clusters) {
  if (clusters < 1) throw config_error("distribution score needs C >= 1");
  std::vector<std::size_t> sizes(clusters, 0);
  for (const auto& a : assignments.rows) {
    if (a.cluster < 0 || static_cast<std::size_t>(a.cluster) >= clusters)
      throw input_error("cluster id " + std::to_string(a.cluster) + " out of range");
    ++sizes[static_cast<std::size_t>(a.cluster)];
  }
  return distribution_from_sizes(sizes);
}

/// describe()-style summary of a sample of counts.
struct DescribeStats {
  std::size_t nobs = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // n - 1 denominator
  double skewness = 0.0;  // biased g1
  double kurtosis = 0.0;  // biased excess g2
};

inline DescribeStats describe(const std::vector<double>& xs) {
  DescribeStats s;
  s.nobs = xs.size();
  if (xs.empty()) return s;
  const auto n = static_cast<double>(xs.size());
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  for (double x : xs) s.mean += x;
  s.mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : xs) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  if (xs.size() >= 2) s.variance = m2 / (n - 1.0);
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (xs.size() >= 3 && m2 > 0.0) s.skewness = m3 / std::pow(m2, 1.5);
  if (xs.size() >= 4 && m2 > 0.0) s.kurtosis = m4 / (m2 * m2) - 3.0;
  return s;
}

struct IntentStats {
  std::string intent;
  std::size_t total = 0;
  DescribeStats nonzero;       // clusters holding at least one member
  DescribeStats all_clusters;  // the full C-length count vector
  std::vector<std::size_t> counts;
};

struct IntentConfidenceReport {
  std::vector<IntentStats> intents;  // sorted by intent name
};

/// How an intent's utterances spread over the clusters.
inline IntentConfidenceReport intent_confidence(const AssignmentTable& assignments,
                                                const std::map<std::string, std::string>& annotations,
                                                std::size_t clusters) {
  const auto cluster_of = assignments.by_id();
  std::map<std::string, std::vector<std::size_t>> counts;
  for (const auto& [id, intent] : annotations) {
    const auto it = cluster_of.find(id);
    if (it == cluster_of.end()) throw input_error("annotation for unknown utterance \"" + id + "\"");
    const int c = it->second->cluster;
    if (c < 0 || static_cast<std::size_t>(c) >= clusters)
      throw input_error("cluster id " + std::to_string(c) + " out of range");
    auto& v = counts[intent];
    if (v.empty()) v.assign(clusters, 0);
    ++v[static_cast<std::size_t>(c)];
  }
  IntentConfidenceReport report;
  for (auto& [intent, v] : counts) {
    IntentStats st;
    st.intent = intent;
    std::vector<double> nonzero, all;
    for (auto n : v) {
      st.total += n;
      all.push_back(static_cast<double>(n));
      if (n > 0) nonzero.push_back(static_cast<double>(n));
    }
    st.nonzero = describe(nonzero);
    st.all_clusters = describe(all);
    st.counts = std::move(v);
    report.intents.push_back(std::move(st));
  }
  return report;
}

inline std::string format_describe(const DescribeStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "nobs=%zu, minmax=(%.0f, %.0f), mean=%.2f, variance=%.2f, skewness=%.2f, kurtosis=%.2f",
                s.nobs, s.min, s.max, s.mean, s.variance, s.skewness, s.kurtosis);
  return buf;
}

inline std::string format_describe_tsv(const std::string& intent, const DescribeStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "\t%zu\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f", s.nobs, s.min, s.max, s.mean,
                s.variance, s.skewness, s.kurtosis);
  return intent + buf;
}

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Returns the column of each row.
inline std::vector<std::size_t> hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  const std::size_t m = cost[0].size();
  if (m < n) throw input_error("assignment problem needs rows <= columns");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) col_of[p[j] - 1] = j - 1;
  return col_of;
}

struct Alignment {
  double accuracy = 0.0;
  /// Matched truth state per cluster id, -1 when unmatched.
  std::vector<int> state_of_cluster;
  /// counts[cluster][state]
  std::vector<std::vector<std::size_t>> contingency;
};

/// Maximum-weight one-to-one matching between clusters and truth states.
inline Alignment align_clusters(const AssignmentTable& assignments, const GroundTruth& truth) {
  if (assignments.rows.empty()) throw input_error("alignment of an empty assignment");
  int clusters = 0, states = 0;
  std::vector<std::pair<int, int>> pairs;
  for (const auto& a : assignments.rows) {
    const auto it = truth.state_of.find(a.utterance_id);
    if (it == truth.state_of.end()) throw input_error("no ground truth for \"" + a.utterance_id + "\"");
    if (a.cluster < 0) throw input_error("negative cluster id");
    pairs.emplace_back(a.cluster, it->second);
    clusters = std::max(clusters, a.cluster + 1);
    states = std::max(states, it->second + 1);
  }
  clusters = std::max(clusters, states);  // pad with empty clusters so states <= clusters

  Alignment out;
  out.contingency.assign(static_cast<std::size_t>(clusters), std::vector<std::size_t>(static_cast<std::size_t>(states), 0));
  for (const auto& [c, s] : pairs) ++out.contingency[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)];

  std::vector<std::vector<double>> cost(static_cast<std::size_t>(states), std::vector<double>(static_cast<std::size_t>(clusters)));
  for (int s = 0; s < states; ++s)
    for (int c = 0; c < clusters; ++c)
      cost[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)] =
          -static_cast<double>(out.contingency[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)]);
  const auto col_of = hungarian_min_cost(cost);

  out.state_of_cluster.assign(static_cast<std::size_t>(clusters), -1);
  std::size_t matched = 0;
  for (int s = 0; s < states; ++s) {
    const std::size_t c = col_of[static_cast<std::size_t>(s)];
    out.state_of_cluster[c] = s;
    matched += out.contingency[c][static_cast<std::size_t>(s)];
  }
  out.accuracy = static_cast<double>(matched) / static_cast<double>(pairs.size());
  return out;
}

inline double alignment_accuracy(const AssignmentTable& assignments, const GroundTruth& truth) {
  return align_clusters(assignments, truth).accuracy;
}

}  // namespace tscan
