#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "tscan/cluster_head.hpp"
#include "tscan/config.hpp"
#include "tscan/corpus.hpp"
#include "tscan/embeddings.hpp"
#include "tscan/kmeans.hpp"
#include "tscan/metrics.hpp"
#include "tscan/neighbors.hpp"
#include "tscan/scan.hpp"
#include "tscan/self_label.hpp"
#include "tscan/structure.hpp"

namespace tscan {

/// Hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::string& path) {
  const auto bytes = detail::read_all(path);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw input_error("sha256 failed for \"" + path + "\"");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

/// Runs `fn`, re-raising any failure tagged with the stage name.
template <typename F>
auto run_stage(const std::string& stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  } catch (const std::exception& e) {
    throw StageError(stage, input_error(e.what()));
  }
}

/// Clustering of one utterance subset (the whole corpus, or one role).
struct RoleClustering {
  std::string tag;  // "" for joint, "agent"/"user" per role
  EmbeddingSet set;
  NeighborTable neighbors;
  TrainResult trained;
  SelfLabelResult self_labeled;
  AssignmentTable assignments;      // local cluster ids
  AssignmentTable kmeans_assignments;
};

struct PipelineResult {
  std::vector<std::string> outputs;  // paths relative to output_dir, manifest last
  AssignmentTable assignments;       // unified cluster ids
  AssignmentTable kmeans_assignments;
  std::size_t total_clusters = 0;
  ClusterLabels labels;
  TransitionModel model;
  DialogGraph graph;
  DistributionReport scan_distribution;
  DistributionReport kmeans_distribution;
  std::optional<double> scan_alignment;
  std::optional<double> kmeans_alignment;
  std::vector<double> self_label_confidence;
};

namespace detail {

inline AssignmentTable shifted(AssignmentTable t, int offset) {
  for (auto& a : t.rows) a.cluster += offset;
  return t;
}

inline void append(AssignmentTable& into, const AssignmentTable& from) {
  into.rows.insert(into.rows.end(), from.rows.begin(), from.rows.end());
}

inline std::string suffix(const std::string& tag) { return tag.empty() ? "" : "_" + tag; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path.string() + "\"");
  out << text;
}

inline std::string format_metrics(const PipelineResult& r, const std::optional<IntentConfidenceReport>& scan_intents,
                                  const std::optional<IntentConfidenceReport>& km_intents) {
  std::ostringstream out;
  char buf[256];
  auto dist_line = [&](const char* name, const DistributionReport& d) {
    std::snprintf(buf, sizeof buf, "distribution %s: score=%.4f, ideal=%.4f, deviation=%.4f\n", name, d.score,
                  d.ideal, d.deviation);
    out << buf;
  };
  out << "clusters=" << r.total_clusters << ", utterances=" << r.assignments.size() << "\n";
  dist_line("scan", r.scan_distribution);
  dist_line("kmeans", r.kmeans_distribution);
  if (r.scan_alignment) {
    std::snprintf(buf, sizeof buf, "alignment scan: %.4f\nalignment kmeans: %.4f\n", *r.scan_alignment,
                  *r.kmeans_alignment);
    out << buf;
  }
  if (scan_intents && km_intents) {
    for (std::size_t i = 0; i < scan_intents->intents.size(); ++i) {
      const auto& s = scan_intents->intents[i];
      const auto& k = km_intents->intents[i];
      out << "\nintent: " << s.intent << "\n";
      out << "with K-means\n" << format_describe(k.nonzero) << "\n";
      out << "  all clusters: " << format_describe(k.all_clusters) << "\n";
      out << "with Scan\n" << format_describe(s.nonzero) << "\n";
      out << "  all clusters: " << format_describe(s.all_clusters) << "\n";
    }
  }
  return out.str();
}

inline std::string format_intent_tsv(const IntentConfidenceReport& report) {
  std::string out;
  for (const auto& s : report.intents) out += format_describe_tsv(s.intent, s.nonzero) + "\n";
  return out;
}

}  // namespace detail

/// End-to-end run: embeddings -> neighbors -> SCAN -> self-label -> assign ->
/// transitions -> pruned graph -> metrics, with every artifact written to
/// cfg.output_dir and a manifest of content digests.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  run_stage("config", [&] { validate(cfg); });
  const fs::path out_dir(cfg.output_dir);
  run_stage("output", [&] { fs::create_directories(out_dir); });

  PipelineResult result;
  auto out_path = [&](const std::string& name) {
    result.outputs.push_back(name);
    return (out_dir / name).string();
  };

  const Corpus corpus = run_stage("load_corpus", [&] { return load_corpus(cfg.corpus); });
  std::vector<std::string> ids;
  std::vector<Speaker> roles;
  for (const auto* u : corpus.utterances()) {
    ids.push_back(u->utterance_id);
    roles.push_back(u->speaker);
  }

  EmbeddingSet embeddings;
  if (!cfg.embeddings.empty()) {
    const auto raw = run_stage("read_embeddings", [&] { return read_embeddings(cfg.embeddings); });
    embeddings = run_stage("normalize", [&] { return l2_normalize(align_to(raw, ids)); });
  } else {
    embeddings = run_stage("embed_hash", [&] {
      return hashed_ngram_embed(corpus, cfg.hash_dim, stream_seed(cfg.seed, "embed-hash"));
    });
  }
  run_stage("write_embeddings", [&] { write_embeddings(embeddings, out_path("embeddings.tscn")); });
  result.outputs.push_back("embeddings.tscn.ids");

  std::vector<RoleClustering> parts;
  if (cfg.mode == ClusterMode::Joint) {
    parts.push_back({"", embeddings, {}, {}, {}, {}, {}});
  } else {
    for (Speaker who : {Speaker::Agent, Speaker::User}) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < roles.size(); ++i)
        if (roles[i] == who) rows.push_back(i);
      parts.push_back({speaker_name(who), select_rows(embeddings, rows), {}, {}, {}, {}, {}});
    }
  }

  const auto clusters = cfg.clusters;
  for (auto& part : parts) {
    const std::string sfx = detail::suffix(part.tag);
    part.neighbors = run_stage("mine", [&] { return mine_neighbors(part.set, cfg.k, cfg.threads); });
    run_stage("mine", [&] { write_neighbors(part.neighbors, part.set.ids, out_path("neighbors" + sfx + ".tsv")); });

    TrainConfig tc = cfg.train;
    tc.seed = stream_seed(cfg.seed, "train" + sfx);
    part.trained = run_stage("train", [&] { return train(part.set, part.neighbors, clusters, tc); });
    part.trained.head = quantize(part.trained.head);
    run_stage("train", [&] {
      write_head(part.trained.head, out_path("head" + sfx + ".tsch"));
      write_history(part.trained.history, out_path("history" + sfx + ".tsv"));
    });

    TrainConfig sc = cfg.train;
    sc.seed = stream_seed(cfg.seed, "selflabel" + sfx);
    part.self_labeled = run_stage("selflabel", [&] {
      return fine_tune_confident(part.trained.head, part.set, cfg.self_label_threshold,
                                 cfg.self_label_iterations, sc);
    });
    part.self_labeled.head = quantize(part.self_labeled.head);
    run_stage("selflabel", [&] {
      write_head(part.self_labeled.head, out_path("head_selflabel" + sfx + ".tsch"));
      std::ostringstream conf;
      char buf[64];
      for (std::size_t i = 0; i < part.self_labeled.mean_confidence.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu\t%.6f\n", i, part.self_labeled.mean_confidence[i]);
        conf << buf;
      }
      detail::write_text(out_path("selflabel" + sfx + ".tsv"), conf.str());
    });
    result.self_label_confidence = part.self_labeled.mean_confidence;

    part.assignments = run_stage("assign", [&] { return assign(part.self_labeled.head, part.set); });
    part.kmeans_assignments = run_stage("kmeans", [&] {
      return kmeans(part.set, clusters, stream_seed(cfg.seed, "kmeans" + sfx),
                    KMeansOptions{cfg.kmeans_max_iters, cfg.kmeans_tol})
          .assignments;
    });
  }

  // Unified cluster id space: per-role user clusters follow the agent ones.
  run_stage("selflabel", [&] {
    if (parts.size() == 1) {
      result.labels = extract_prototypes(parts[0].assignments, corpus, clusters);
    } else {
      result.labels = merge_role_labels(extract_prototypes(parts[0].assignments, corpus, clusters),
                                        extract_prototypes(parts[1].assignments, corpus, clusters),
                                        static_cast<int>(clusters));
    }
  });
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const int offset = static_cast<int>(p * clusters);
    detail::append(result.assignments, detail::shifted(parts[p].assignments, offset));
    detail::append(result.kmeans_assignments, detail::shifted(parts[p].kmeans_assignments, offset));
  }
  result.total_clusters = clusters * parts.size();
  run_stage("assign", [&] {
    write_assignments(result.assignments, out_path("assignments.tsv"));
    write_assignments(result.kmeans_assignments, out_path("kmeans_assignments.tsv"));
    write_labels(result.labels, out_path("labels.tsv"));
  });

  result.model = run_stage("transitions", [&] { return build_transitions(corpus, result.assignments); });
  run_stage("transitions", [&] { write_edge_list(result.model, out_path("edges.tsv"), &result.labels); });
  result.graph = run_stage("graph", [&] { return prune(result.model, cfg.prune_threshold); });
  run_stage("graph", [&] { detail::write_text(out_path("graph.dot"), to_dot(result.graph, result.labels)); });

  run_stage("metrics", [&] {
    result.scan_distribution = distribution_score(result.assignments, result.total_clusters);
    result.kmeans_distribution = distribution_score(result.kmeans_assignments, result.total_clusters);
    std::optional<IntentConfidenceReport> scan_intents, km_intents;
    if (!cfg.truth.empty()) {
      const GroundTruth truth = load_ground_truth(cfg.truth);
      // per-role clusters live in separate id ranges, so align each role on its own
      double scan_hits = 0.0, km_hits = 0.0;
      for (const auto& part : parts) {
        const double w = static_cast<double>(part.assignments.size());
        scan_hits += w * alignment_accuracy(part.assignments, truth);
        km_hits += w * alignment_accuracy(part.kmeans_assignments, truth);
      }
      result.scan_alignment = scan_hits / static_cast<double>(result.assignments.size());
      result.kmeans_alignment = km_hits / static_cast<double>(result.assignments.size());
      scan_intents = intent_confidence(result.assignments, truth.intent_of, result.total_clusters);
      km_intents = intent_confidence(result.kmeans_assignments, truth.intent_of, result.total_clusters);
      detail::write_text(out_path("metrics.tsv"), detail::format_intent_tsv(*scan_intents));
      detail::write_text(out_path("kmeans_metrics.tsv"), detail::format_intent_tsv(*km_intents));
    }
    detail::write_text(out_path("metrics.txt"), detail::format_metrics(result, scan_intents, km_intents));
  });

  run_stage("manifest", [&] {
    std::ostringstream m;
    m << "# tscan run manifest\n";
    for (const auto& key : config_keys()) m << "config." << key << "=" << config_value(cfg, key) << "\n";
    m << "seed=" << cfg.seed << "\n";
    m << "input\tcorpus\t" << sha256_file(cfg.corpus) << "\n";
    if (!cfg.embeddings.empty()) {
      m << "input\tembeddings\t" << sha256_file(cfg.embeddings) << "\n";
      m << "input\tembeddings.ids\t" << sha256_file(cfg.embeddings + ".ids") << "\n";
    }
    if (!cfg.truth.empty()) m << "input\ttruth\t" << sha256_file(cfg.truth) << "\n";
    for (const auto& name : result.outputs) m << "output\t" << name << "\t" << sha256_file((out_dir / name).string()) << "\n";
    detail::write_text(out_dir / "manifest.txt", m.str());
    result.outputs.push_back("manifest.txt");
  });
  return result;
}

}  // namespace tscan
