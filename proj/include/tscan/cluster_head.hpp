#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tscan/embeddings.hpp"
#include "tscan/error.hpp"
#include "tscan/random.hpp"

namespace tscan {

/// Linear map followed by a softmax over C clusters.
struct ClusterHead {
  Eigen::MatrixXd weights;  // C x dim
  Eigen::VectorXd bias;     // C

  std::size_t num_clusters() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }

  static ClusterHead zeros(std::size_t dim, std::size_t clusters) {
    return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(clusters), static_cast<Eigen::Index>(dim)),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(clusters))};
  }

  bool operator==(const ClusterHead& o) const { return weights == o.weights && bias == o.bias; }
};

/// Weights uniform in [-1/sqrt(dim), 1/sqrt(dim)], bias zero.
inline ClusterHead init_head(std::size_t dim, std::size_t clusters, std::uint64_t seed) {
  if (dim < 2) throw config_error("head dim must be >= 2");
  if (clusters < 2) throw config_error("number of clusters must be >= 2");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  ClusterHead head = ClusterHead::zeros(dim, clusters);
  for (Eigen::Index c = 0; c < head.weights.rows(); ++c)
    for (Eigen::Index j = 0; j < head.weights.cols(); ++j) head.weights(c, j) = rng.uniform(-bound, bound);
  return head;
}

/// Rounds every parameter to float32, the checkpoint precision.
inline ClusterHead quantize(const ClusterHead& head) {
  ClusterHead out = head;
  out.weights = out.weights.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  out.bias = out.bias.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  return out;
}

/// Row-wise softmax with max subtraction.
inline RowMatrix softmax_rows(const RowMatrix& logits) {
  RowMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

inline RowMatrix logits(const ClusterHead& head, const RowMatrix& vectors) {
  if (static_cast<std::size_t>(vectors.cols()) != head.dim())
    throw input_error("dimension mismatch: head dim " + std::to_string(head.dim()) + ", vectors dim " +
                      std::to_string(vectors.cols()));
  RowMatrix z = vectors * head.weights.transpose();
  z.rowwise() += head.bias.transpose();
  return z;
}

/// Cluster probabilities, one row per input vector.
inline RowMatrix forward(const ClusterHead& head, const RowMatrix& vectors) {
  return softmax_rows(logits(head, vectors));
}

struct Assignment {
  std::string utterance_id;
  int cluster = 0;
  double confidence = 0.0;

  bool operator==(const Assignment&) const = default;
};

struct AssignmentTable {
  std::vector<Assignment> rows;

  std::size_t size() const { return rows.size(); }

  std::unordered_map<std::string, const Assignment*> by_id() const {
    std::unordered_map<std::string, const Assignment*> m;
    for (const auto& a : rows) m.emplace(a.utterance_id, &a);
    return m;
  }

  std::vector<int> clusters() const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (const auto& a : rows) out.push_back(a.cluster);
    return out;
  }
};

/// Argmax with ties resolved towards the lower cluster index.
inline AssignmentTable assign_from_probs(const std::vector<std::string>& ids, const RowMatrix& probs) {
  AssignmentTable table;
  table.rows.reserve(ids.size());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c)
      if (probs(r, c) > probs(r, best)) best = c;
    table.rows.push_back({ids[static_cast<std::size_t>(r)], static_cast<int>(best), probs(r, best)});
  }
  return table;
}

inline AssignmentTable assign(const ClusterHead& head, const EmbeddingSet& set) {
  return assign_from_probs(set.ids, forward(head, set.vectors));
}

inline void write_assignments(const AssignmentTable& table, std::ostream& out) {
  char buf[32];
  for (const auto& a : table.rows) {
    std::snprintf(buf, sizeof buf, "%.6f", a.confidence);
    out << a.utterance_id << '\t' << a.cluster << '\t' << buf << '\n';
  }
}

inline void write_assignments(const AssignmentTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path + "\"");
  write_assignments(table, out);
}

inline AssignmentTable read_assignments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open assignments \"" + path + "\"");
  AssignmentTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1)
      f.push_back(line.substr(start, pos - start));
    f.push_back(line.substr(start));
    if (f.size() != 3) throw input_error("assignments line " + std::to_string(line_no) + ": expected 3 fields");
    try {
      table.rows.push_back({f[0], std::stoi(f[1]), std::stod(f[2])});
    } catch (const std::exception&) {
      throw input_error("assignments line " + std::to_string(line_no) + ": bad number");
    }
    if (table.rows.back().cluster < 0)
      throw input_error("assignments line " + std::to_string(line_no) + ": negative cluster id");
  }
  return table;
}

inline void write_head(const ClusterHead& head, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path + "\"");
  out.write("TSCH", 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(head.num_clusters()));
  detail::put_u32(out, static_cast<std::uint32_t>(head.dim()));
  for (Eigen::Index c = 0; c < head.weights.rows(); ++c)
    for (Eigen::Index j = 0; j < head.weights.cols(); ++j) detail::put_f32(out, head.weights(c, j));
  for (Eigen::Index c = 0; c < head.bias.size(); ++c) detail::put_f32(out, head.bias(c));
}

inline ClusterHead read_head(const std::string& path) {
  const auto bytes = detail::read_all(path);
  const auto header = detail::read_header(bytes, "TSCH", 2, "head checkpoint");
  const std::size_t clusters = header[0], dim = header[1];
  if (clusters < 2 || dim < 2) throw input_error("head checkpoint: degenerate shape");
  if (bytes.size() != 16 + 4 * (clusters * dim + clusters))
    throw input_error("head checkpoint: payload length mismatch");
  ClusterHead head = ClusterHead::zeros(dim, clusters);
  const unsigned char* p = bytes.data() + 16;
  for (Eigen::Index c = 0; c < head.weights.rows(); ++c)
    for (Eigen::Index j = 0; j < head.weights.cols(); ++j, p += 4) head.weights(c, j) = detail::get_f32(p);
  for (Eigen::Index c = 0; c < head.bias.size(); ++c, p += 4) head.bias(c) = detail::get_f32(p);
  if (!head.weights.allFinite() || !head.bias.allFinite()) throw numeric_error("head checkpoint: non-finite entry");
  return head;
}

/// First/second moment adaptive update state for a ClusterHead.
class AdamOptimizer {
public:
  AdamOptimizer(const ClusterHead& like, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon),
        m_(ClusterHead::zeros(like.dim(), like.num_clusters())),
        v_(ClusterHead::zeros(like.dim(), like.num_clusters())) {}

  void step(ClusterHead& head, const ClusterHead& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    update(head.weights, grad.weights, m_.weights, v_.weights, c1, c2);
    update(head.bias, grad.bias, m_.bias, v_.bias, c1, c2);
  }

private:
  template <typename M>
  void update(M& param, const M& g, M& m, M& v, double c1, double c2) const {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  ClusterHead m_, v_;
};

}  // namespace tscan
