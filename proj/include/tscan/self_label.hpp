#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tscan/cluster_head.hpp"
#include "tscan/corpus.hpp"
#include "tscan/scan.hpp"

namespace tscan {

/// Bijective base-26 name of a cluster index: 0 -> "a", 25 -> "z", 26 -> "aa".
inline std::string cluster_letter(std::size_t index) {
  std::string s;
  std::size_t n = index + 1;
  while (n > 0) {
    --n;
    s.push_back(static_cast<char>('a' + n % 26));
    n /= 26;
  }
  std::reverse(s.begin(), s.end());
  return s;
}

struct ClusterLabel {
  std::string letter;
  int cluster_id = 0;
  std::optional<std::string> prototype_id;
  std::optional<std::string> prototype_text;
  double confidence = 0.0;

  bool operator==(const ClusterLabel&) const = default;
};

struct ClusterLabels {
  std::vector<ClusterLabel> clusters;  // ordered by cluster_id

  const ClusterLabel* find(int cluster_id) const {
    for (const auto& c : clusters)
      if (c.cluster_id == cluster_id) return &c;
    return nullptr;
  }
};

struct SelfLabelResult {
  ClusterHead head;
  /// Mean max-probability over the whole set: entry 0 before fine-tuning,
  /// then one entry after each completed iteration.
  std::vector<double> mean_confidence;
  std::size_t iterations_run = 0;
};

inline double mean_max_probability(const RowMatrix& probs) {
  return probs.rowwise().maxCoeff().mean();
}

/// Self-labeling: repeatedly fine-tunes the head with cross-entropy on its
/// own confident argmax predictions, sampling batches class-balanced.
inline SelfLabelResult fine_tune_confident(const ClusterHead& head, const EmbeddingSet& set, double threshold,
                                           std::size_t iterations, const TrainConfig& config) {
  if (!(threshold >= 0.0)) throw config_error("self-label threshold must be non-negative");
  validate(config);
  SelfLabelResult result{head, {}, 0};
  RowMatrix probs = forward(result.head, set.vectors);
  result.mean_confidence.push_back(mean_max_probability(probs));
  if (iterations == 0) return result;

  AdamOptimizer adam(result.head, config.learning_rate, config.beta1, config.beta2, config.adam_epsilon);
  Rng rng(stream_seed(config.seed, "self-label"));
  const auto clusters = static_cast<Eigen::Index>(head.num_clusters());

  for (std::size_t it = 0; it < iterations; ++it) {
    std::map<int, std::vector<std::size_t>> members;
    std::size_t selected = 0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < clusters; ++c)
        if (probs(r, c) > probs(r, best)) best = c;
      if (probs(r, best) >= threshold) {
        members[static_cast<int>(best)].push_back(static_cast<std::size_t>(r));
        ++selected;
      }
    }
    if (selected == 0) {
      if (it == 0) throw config_error("threshold too high: no confident samples");
      break;
    }
    std::vector<std::pair<int, const std::vector<std::size_t>*>> groups;
    for (const auto& [label, rows] : members) groups.emplace_back(label, &rows);

    const std::size_t steps = (selected + config.batch_size - 1) / config.batch_size;
    RowMatrix batch(static_cast<Eigen::Index>(config.batch_size), set.vectors.cols());
    std::vector<int> labels(config.batch_size);
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        const auto& [label, rows] = groups[rng.index(groups.size())];
        const std::size_t row = (*rows)[rng.index(rows->size())];
        batch.row(static_cast<Eigen::Index>(i)) = set.vectors.row(static_cast<Eigen::Index>(row));
        labels[i] = label;
      }
      RowMatrix dz = forward(result.head, batch);
      for (std::size_t i = 0; i < config.batch_size; ++i) dz(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
      dz /= static_cast<double>(config.batch_size);
      ClusterHead grad{dz.transpose() * batch, dz.colwise().sum().transpose()};
      if (!grad.weights.allFinite()) throw numeric_error("non-finite gradient during self-labeling");
      adam.step(result.head, grad);
    }
    probs = forward(result.head, set.vectors);
    result.mean_confidence.push_back(mean_max_probability(probs));
    ++result.iterations_run;
  }
  return result;
}

/// One prototype per cluster: the most confident member, ties broken by the
/// lexicographically smaller utterance id.
inline ClusterLabels extract_prototypes(const AssignmentTable& assignments, const Corpus& corpus,
                                        std::size_t clusters) {
  std::unordered_map<std::string, const Utterance*> text_of;
  for (const auto* u : corpus.utterances()) text_of.emplace(u->utterance_id, u);

  ClusterLabels labels;
  for (std::size_t c = 0; c < clusters; ++c) labels.clusters.push_back({cluster_letter(c), static_cast<int>(c), {}, {}, 0.0});
  for (const auto& a : assignments.rows) {
    const auto it = text_of.find(a.utterance_id);
    if (it == text_of.end()) throw input_error("assignment for unknown utterance \"" + a.utterance_id + "\"");
    if (a.cluster < 0 || static_cast<std::size_t>(a.cluster) >= clusters)
      throw input_error("cluster id out of range for \"" + a.utterance_id + "\"");
    auto& lab = labels.clusters[static_cast<std::size_t>(a.cluster)];
    const bool better = !lab.prototype_id || a.confidence > lab.confidence ||
                        (a.confidence == lab.confidence && a.utterance_id < *lab.prototype_id);
    if (better) {
      lab.prototype_id = a.utterance_id;
      lab.prototype_text = it->second->text;
      lab.confidence = a.confidence;
    }
  }
  return labels;
}

/// Joins per-role labels into one namespace: agent letters get an "A" prefix,
/// user letters a "U" prefix and user cluster ids are shifted by `user_offset`.
inline ClusterLabels merge_role_labels(const ClusterLabels& agent, const ClusterLabels& user, int user_offset) {
  ClusterLabels out;
  for (auto lab : agent.clusters) {
    lab.letter = "A" + lab.letter;
    out.clusters.push_back(std::move(lab));
  }
  for (auto lab : user.clusters) {
    lab.letter = "U" + lab.letter;
    lab.cluster_id += user_offset;
    out.clusters.push_back(std::move(lab));
  }
  return out;
}

namespace detail {
inline std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\t' || ch == '\n' || ch == '\r') ch = ' ';
  return s;
}
}  // namespace detail

inline void write_labels(const ClusterLabels& labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path + "\"");
  for (const auto& l : labels.clusters)
    out << l.letter << '\t' << l.cluster_id << '\t' << l.prototype_id.value_or("") << '\t'
        << detail::one_line(l.prototype_text.value_or("")) << '\n';
}

inline ClusterLabels read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open labels \"" + path + "\"");
  ClusterLabels labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
      const auto pos = line.find('\t', start);
      if (pos == std::string::npos) throw input_error("labels: expected 4 tab-separated fields");
      f.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    f.push_back(line.substr(start));
    ClusterLabel l;
    l.letter = f[0];
    try {
      l.cluster_id = std::stoi(f[1]);
    } catch (const std::exception&) {
      throw input_error("labels: bad cluster id \"" + f[1] + "\"");
    }
    if (!f[2].empty()) {
      l.prototype_id = f[2];
      l.prototype_text = f[3];
    }
    labels.clusters.push_back(std::move(l));
  }
  return labels;
}

}  // namespace tscan
