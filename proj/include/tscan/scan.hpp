#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "tscan/cluster_head.hpp"
#include "tscan/embeddings.hpp"
#include "tscan/error.hpp"
#include "tscan/neighbors.hpp"
#include "tscan/random.hpp"

namespace tscan {

struct TrainConfig {
  double entropy_weight = 5.0;
  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  /// Probability clamp floor inside the logarithms.
  double eps = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.entropy_weight >= 0.0)) throw config_error("entropy_weight must be >= 0");
  if (!(cfg.learning_rate > 0.0)) throw config_error("learning_rate must be > 0");
  if (cfg.batch_size < 2) throw config_error("batch_size must be >= 2");
  if (cfg.epochs < 1) throw config_error("epochs must be >= 1");
  if (!(cfg.eps > 0.0) || cfg.eps > 1e-4) throw config_error("eps must be in (0, 1e-4]");
}

struct LossBreakdown {
  double consistency = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

namespace detail {

inline void check_probability_rows(const RowMatrix& p, const char* what) {
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    if (std::abs(p.row(r).sum() - 1.0) > 1e-6 || (p.row(r).array() < 0.0).any())
      throw input_error(std::string(what) + " row " + std::to_string(r) + " is not a probability vector");
}

inline double clamp_prob(double x, double eps) { return std::clamp(x, eps, 1.0); }

}  // namespace detail

/// SCAN objective on a batch: mean -log <p_i, q_i> minus entropy_weight times
/// the entropy of the mean anchor distribution.
inline LossBreakdown scan_loss(const RowMatrix& anchor_probs, const RowMatrix& neighbor_probs,
                               double entropy_weight, double eps) {
  if (anchor_probs.rows() != neighbor_probs.rows() || anchor_probs.cols() != neighbor_probs.cols() ||
      anchor_probs.rows() == 0)
    throw input_error("scan_loss: shape mismatch");
  detail::check_probability_rows(anchor_probs, "anchor");
  detail::check_probability_rows(neighbor_probs, "neighbor");

  const auto batch = static_cast<double>(anchor_probs.rows());
  LossBreakdown out;
  for (Eigen::Index i = 0; i < anchor_probs.rows(); ++i) {
    const double sim = anchor_probs.row(i).dot(neighbor_probs.row(i));
    out.consistency -= std::log(detail::clamp_prob(sim, eps));
  }
  out.consistency /= batch;

  const Eigen::RowVectorXd mean = anchor_probs.colwise().sum() / batch;
  for (Eigen::Index c = 0; c < mean.size(); ++c)
    out.entropy -= mean(c) * std::log(detail::clamp_prob(mean(c), eps));
  out.total = out.consistency - entropy_weight * out.entropy;
  return out;
}

/// Loss and its gradient with respect to the head parameters. Both the anchor
/// and neighbor branches go through the shared head.
inline std::pair<LossBreakdown, ClusterHead> scan_loss_and_grad(const ClusterHead& head,
                                                                const RowMatrix& anchor_vectors,
                                                                const RowMatrix& neighbor_vectors,
                                                                double entropy_weight, double eps) {
  if (anchor_vectors.rows() != neighbor_vectors.rows() || anchor_vectors.rows() == 0)
    throw input_error("scan_loss_grad: batch shape mismatch");
  const RowMatrix p = forward(head, anchor_vectors);
  const RowMatrix q = forward(head, neighbor_vectors);
  const LossBreakdown loss = scan_loss(p, q, entropy_weight, eps);

  const Eigen::Index batch = p.rows();
  const double inv_b = 1.0 / static_cast<double>(batch);

  // d total / d p_i and d total / d q_i
  RowMatrix dp(p.rows(), p.cols());
  RowMatrix dq(q.rows(), q.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double sim = p.row(i).dot(q.row(i));
    const double g = (sim >= eps && sim <= 1.0) ? -inv_b / sim : 0.0;
    dp.row(i) = g * q.row(i);
    dq.row(i) = g * p.row(i);
  }
  const Eigen::RowVectorXd mean = p.colwise().sum() * inv_b;
  Eigen::RowVectorXd dmean(mean.size());
  for (Eigen::Index c = 0; c < mean.size(); ++c) {
    // d(-H)/dm_c, with the clamped branch differentiated as written
    const double dneg_h = mean(c) >= eps ? std::log(mean(c)) + 1.0 : std::log(eps);
    dmean(c) = entropy_weight * dneg_h;
  }
  dp.rowwise() += dmean * inv_b;

  // back through the softmax: dz = p * (dp - <dp, p>)
  auto softmax_back = [](const RowMatrix& prob, const RowMatrix& dprob) {
    RowMatrix dz(prob.rows(), prob.cols());
    for (Eigen::Index i = 0; i < prob.rows(); ++i) {
      const double inner = dprob.row(i).dot(prob.row(i));
      dz.row(i) = prob.row(i).array() * (dprob.row(i).array() - inner);
    }
    return dz;
  };
  const RowMatrix dza = softmax_back(p, dp);
  const RowMatrix dzn = softmax_back(q, dq);

  ClusterHead grad;
  grad.weights = dza.transpose() * anchor_vectors + dzn.transpose() * neighbor_vectors;
  grad.bias = (dza.colwise().sum() + dzn.colwise().sum()).transpose();
  return {loss, std::move(grad)};
}

inline ClusterHead scan_loss_grad(const ClusterHead& head, const RowMatrix& anchor_vectors,
                                  const RowMatrix& neighbor_vectors, const TrainConfig& config) {
  return scan_loss_and_grad(head, anchor_vectors, neighbor_vectors, config.entropy_weight, config.eps).second;
}

struct TrainResult {
  ClusterHead head;
  std::vector<LossBreakdown> history;  // epoch means
};

/// Mini-batch SCAN training on frozen embeddings. Each step draws one
/// neighbor per anchor uniformly from its mined neighbors.
inline TrainResult train(const EmbeddingSet& set, const NeighborTable& table, std::size_t clusters,
                         const TrainConfig& config) {
  validate(config);
  if (set.count() == 0) throw input_error("cannot train on an empty embedding set");
  require_normalized(set);
  if (clusters > set.count()) throw config_error("more clusters than embeddings");
  if (table.rows.size() != set.count()) throw input_error("neighbor table does not match embedding set");

  TrainResult result{init_head(set.dim(), clusters, stream_seed(config.seed, "scan-init")), {}};
  AdamOptimizer adam(result.head, config.learning_rate, config.beta1, config.beta2, config.adam_epsilon);
  Rng rng(stream_seed(config.seed, "scan-batches"));

  const std::size_t n = set.count();
  std::vector<std::size_t> order(n);
  RowMatrix anchors, neighbors;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    LossBreakdown sum;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < n; lo += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - lo);
      if (len < 2) break;
      anchors.resize(static_cast<Eigen::Index>(len), set.vectors.cols());
      neighbors.resize(static_cast<Eigen::Index>(len), set.vectors.cols());
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t a = order[lo + i];
        const auto& row = table.rows[a];
        if (row.empty()) throw input_error("anchor without neighbors");
        const std::size_t nb = row[rng.index(row.size())].index;
        anchors.row(static_cast<Eigen::Index>(i)) = set.vectors.row(static_cast<Eigen::Index>(a));
        neighbors.row(static_cast<Eigen::Index>(i)) = set.vectors.row(static_cast<Eigen::Index>(nb));
      }
      auto [loss, grad] = scan_loss_and_grad(result.head, anchors, neighbors, config.entropy_weight, config.eps);
      if (!std::isfinite(loss.total) || !grad.weights.allFinite() || !grad.bias.allFinite())
        throw numeric_error("non-finite loss or gradient in epoch " + std::to_string(epoch + 1));
      adam.step(result.head, grad);
      sum.consistency += loss.consistency;
      sum.entropy += loss.entropy;
      ++batches;
    }
    LossBreakdown mean;
    if (batches) {
      mean.consistency = sum.consistency / static_cast<double>(batches);
      mean.entropy = sum.entropy / static_cast<double>(batches);
    }
    mean.total = mean.consistency - config.entropy_weight * mean.entropy;
    result.history.push_back(mean);
  }
  return result;
}

inline void write_history(const std::vector<LossBreakdown>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path + "\"");
  char buf[128];
  for (std::size_t e = 0; e < history.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\n", e + 1, history[e].consistency, history[e].entropy,
                  history[e].total);
    out << buf;
  }
}

}  // namespace tscan
