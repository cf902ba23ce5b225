#pragma once

#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tscan/cluster_head.hpp"
#include "tscan/corpus.hpp"
#include "tscan/error.hpp"
#include "tscan/self_label.hpp"

namespace tscan {

/// Graph node: a cluster id, or one of the two boundary nodes. The sentinel
/// values make plain integer order put "^" first and "$" last.
using NodeId = int;
inline constexpr NodeId kStartNode = -1;
inline constexpr NodeId kEndNode = std::numeric_limits<int>::max();

using EdgeKey = std::pair<NodeId, NodeId>;

struct TransitionModel {
  std::set<NodeId> nodes{kStartNode, kEndNode};
  std::map<EdgeKey, long long> counts;
  std::map<EdgeKey, double> probabilities;

  long long outgoing_count(NodeId from) const {
    long long n = 0;
    for (auto it = counts.lower_bound({from, std::numeric_limits<int>::min()});
         it != counts.end() && it->first.first == from; ++it)
      n += it->second;
    return n;
  }
};

struct GraphEdge {
  NodeId from = 0;
  NodeId to = 0;
  long long count = 0;
  double probability = 0.0;
};

struct DialogGraph {
  std::set<NodeId> nodes;
  std::vector<GraphEdge> edges;  // sorted by (from, to)
};

/// Row-normalizes the raw counts into probabilities.
inline void normalize_rows(TransitionModel& model) {
  model.probabilities.clear();
  std::map<NodeId, long long> totals;
  for (const auto& [edge, n] : model.counts) totals[edge.first] += n;
  for (const auto& [edge, n] : model.counts)
    model.probabilities[edge] = static_cast<double>(n) / static_cast<double>(totals[edge.first]);
}

/// Counts ^ -> A1, A_t -> U_t, U_t -> A_{t+1} and last -> $ per dialog.
inline TransitionModel build_transitions(const Corpus& corpus, const AssignmentTable& assignments) {
  const auto cluster_of = assignments.by_id();
  auto lookup = [&](const Utterance& u) {
    const auto it = cluster_of.find(u.utterance_id);
    if (it == cluster_of.end()) throw input_error("missing assignment for utterance \"" + u.utterance_id + "\"");
    return it->second->cluster;
  };

  TransitionModel model;
  for (const auto& dialog : corpus.dialogs) {
    NodeId prev = kStartNode;
    for (const auto& turn : dialog.turns) {
      const NodeId a = lookup(turn.agent);
      model.nodes.insert(a);
      ++model.counts[{prev, a}];
      prev = a;
      if (turn.user) {
        const NodeId u = lookup(*turn.user);
        model.nodes.insert(u);
        ++model.counts[{prev, u}];
        prev = u;
      }
    }
    if (prev != kStartNode) ++model.counts[{prev, kEndNode}];
  }
  normalize_rows(model);
  return model;
}

/// Keeps edges with probability >= threshold (no renormalization) and drops
/// cluster nodes left without edges.
inline DialogGraph prune(const TransitionModel& model, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw config_error("prune threshold must be in [0, 1]");
  DialogGraph g;
  g.nodes = {kStartNode, kEndNode};
  for (const auto& [edge, p] : model.probabilities) {
    if (p < threshold) continue;
    g.edges.push_back({edge.first, edge.second, model.counts.at(edge), p});
    g.nodes.insert(edge.first);
    g.nodes.insert(edge.second);
  }
  return g;
}

inline std::string node_name(NodeId id, const ClusterLabels* labels = nullptr) {
  if (id == kStartNode) return "^";
  if (id == kEndNode) return "$";
  if (labels) {
    if (const auto* l = labels->find(id)) return l->letter;
    throw input_error("no label for cluster " + std::to_string(id));
  }
  return cluster_letter(static_cast<std::size_t>(id));
}

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': break;
      default: out.push_back(ch);
    }
  }
  return out;
}

/// First `max_chars` UTF-8 code points of `s`.
inline std::string truncate_utf8(const std::string& s, std::size_t max_chars) {
  std::size_t chars = 0, i = 0;
  while (i < s.size() && chars < max_chars) {
    const auto c = static_cast<unsigned char>(s[i]);
    i += c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 1;
    ++chars;
  }
  return s.substr(0, std::min(i, s.size()));
}

}  // namespace detail

inline constexpr std::size_t kDotLabelChars = 60;

/// Directed-graph text. Node ids are cluster letters; labels carry the
/// prototype utterance and edge labels the transition probability.
inline std::string to_dot(const DialogGraph& graph, const ClusterLabels& labels) {
  std::ostringstream out;
  out << "digraph dialog_structure {\n  rankdir=LR;\n";
  char buf[32];
  for (NodeId id : graph.nodes) {
    std::string name, text;
    if (id == kStartNode) {
      name = "^";
      text = "Start Node";
    } else if (id == kEndNode) {
      name = "$";
      text = "End Node";
    } else {
      const auto* l = labels.find(id);
      if (!l) throw input_error("no label for cluster " + std::to_string(id));
      name = l->letter;
      text = l->prototype_text.value_or("");
    }
    text = detail::dot_escape(detail::truncate_utf8(text, kDotLabelChars));
    out << "  \"" << detail::dot_escape(name) << "\" [label=\"" << detail::dot_escape(name);
    if (!text.empty()) out << "\\n" << text;
    out << "\", tooltip=\"" << text << "\"];\n";
  }
  for (const auto& e : graph.edges) {
    std::snprintf(buf, sizeof buf, "%.2f", e.probability);
    out << "  \"" << detail::dot_escape(node_name(e.from, &labels)) << "\" -> \""
        << detail::dot_escape(node_name(e.to, &labels)) << "\" [label=\"" << buf << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

inline void write_edge_list(const TransitionModel& model, const std::string& path,
                            const ClusterLabels* labels = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path + "\"");
  char buf[32];
  for (const auto& [edge, n] : model.counts) {
    std::snprintf(buf, sizeof buf, "%.6f", model.probabilities.at(edge));
    out << node_name(edge.first, labels) << '\t' << node_name(edge.second, labels) << '\t' << n << '\t' << buf
        << '\n';
  }
}

/// Inverse of cluster_letter; -1 if `s` is not a lowercase letter string.
inline long letter_index(const std::string& s) {
  if (s.empty()) return -1;
  long n = 0;
  for (char ch : s) {
    if (ch < 'a' || ch > 'z') return -1;
    n = n * 26 + (ch - 'a' + 1);
  }
  return n - 1;
}

/// Reads an edge list back into a model. Names resolve through `labels`
/// when given, otherwise as plain cluster letters. Probabilities are
/// recomputed from the counts.
inline TransitionModel read_edge_list(const std::string& path, const ClusterLabels* labels = nullptr) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open edge list \"" + path + "\"");
  std::map<std::string, NodeId> by_name{{"^", kStartNode}, {"$", kEndNode}};
  if (labels)
    for (const auto& l : labels->clusters) by_name[l.letter] = l.cluster_id;
  auto resolve = [&](const std::string& name) -> NodeId {
    if (const auto it = by_name.find(name); it != by_name.end()) return it->second;
    const long idx = labels ? -1 : letter_index(name);
    if (idx < 0) throw input_error("edge list: unknown node \"" + name + "\"");
    return static_cast<NodeId>(idx);
  };

  TransitionModel model;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string from, to;
    long long count = 0;
    double prob = 0.0;
    if (!std::getline(ss, from, '\t') || !std::getline(ss, to, '\t') || !(ss >> count >> prob) || count < 0)
      throw input_error("edge list: malformed line \"" + line + "\"");
    const EdgeKey key{resolve(from), resolve(to)};
    model.nodes.insert(key.first);
    model.nodes.insert(key.second);
    model.counts[key] = count;
  }
  normalize_rows(model);
  return model;
}

}  // namespace tscan
