#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tscan/error.hpp"
#include "tscan/scan.hpp"

namespace tscan {

enum class ClusterMode { Joint, PerRole };

/// Every pipeline setting. Defaults are the library defaults.
struct PipelineConfig {
  std::string corpus;
  std::string embeddings;  // empty: use the hashed n-gram embedder
  std::string truth;       // optional ground-truth / intent annotations
  std::string output_dir = "tscan_out";
  std::size_t hash_dim = 256;
  std::size_t clusters = 20;
  std::size_t k = 5;
  TrainConfig train;
  double self_label_threshold = 0.99;
  std::size_t self_label_iterations = 5;
  double prune_threshold = 0.6;
  ClusterMode mode = ClusterMode::Joint;
  std::uint64_t seed = 0;
  std::size_t kmeans_max_iters = 300;
  double kmeans_tol = 1e-6;
  unsigned threads = 1;
};

/// Recognized keys, in manifest order.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "corpus",         "embeddings",        "truth",
      "output_dir",     "hash_dim",          "clusters",
      "k",              "entropy_weight",    "learning_rate",
      "batch_size",     "epochs",            "eps",
      "self_label_threshold", "self_label_iterations", "prune_threshold",
      "mode",           "seed",              "kmeans_max_iters",
      "kmeans_tol",     "threads"};
  return keys;
}

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t pos = 0;
      out = static_cast<T>(std::stod(value, &pos));
      if (pos != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw config_error("config: \"" + key + "\" expects a number, got \"" + value + "\"");
    }
  } else {
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
      throw config_error("config: \"" + key + "\" expects a non-negative integer, got \"" + value + "\"");
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_number;
  if (key == "corpus") cfg.corpus = value;
  else if (key == "embeddings") cfg.embeddings = value;
  else if (key == "truth") cfg.truth = value;
  else if (key == "output_dir") cfg.output_dir = value;
  else if (key == "hash_dim") cfg.hash_dim = parse_number<std::size_t>(key, value);
  else if (key == "clusters") cfg.clusters = parse_number<std::size_t>(key, value);
  else if (key == "k") cfg.k = parse_number<std::size_t>(key, value);
  else if (key == "entropy_weight") cfg.train.entropy_weight = parse_number<double>(key, value);
  else if (key == "learning_rate") cfg.train.learning_rate = parse_number<double>(key, value);
  else if (key == "batch_size") cfg.train.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "epochs") cfg.train.epochs = parse_number<std::size_t>(key, value);
  else if (key == "eps") cfg.train.eps = parse_number<double>(key, value);
  else if (key == "self_label_threshold") cfg.self_label_threshold = parse_number<double>(key, value);
  else if (key == "self_label_iterations") cfg.self_label_iterations = parse_number<std::size_t>(key, value);
  else if (key == "prune_threshold") cfg.prune_threshold = parse_number<double>(key, value);
  else if (key == "mode") {
    if (value == "joint") cfg.mode = ClusterMode::Joint;
    else if (value == "per_role") cfg.mode = ClusterMode::PerRole;
    else throw config_error("config: mode must be \"joint\" or \"per_role\"");
  }
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "kmeans_max_iters") cfg.kmeans_max_iters = parse_number<std::size_t>(key, value);
  else if (key == "kmeans_tol") cfg.kmeans_tol = parse_number<double>(key, value);
  else if (key == "threads") cfg.threads = parse_number<unsigned>(key, value);
  else throw config_error("config: unknown key \"" + key + "\"");
}

inline std::string config_value(const PipelineConfig& cfg, const std::string& key) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  if (key == "corpus") return cfg.corpus;
  if (key == "embeddings") return cfg.embeddings;
  if (key == "truth") return cfg.truth;
  if (key == "output_dir") return cfg.output_dir;
  if (key == "hash_dim") return std::to_string(cfg.hash_dim);
  if (key == "clusters") return std::to_string(cfg.clusters);
  if (key == "k") return std::to_string(cfg.k);
  if (key == "entropy_weight") return num(cfg.train.entropy_weight);
  if (key == "learning_rate") return num(cfg.train.learning_rate);
  if (key == "batch_size") return std::to_string(cfg.train.batch_size);
  if (key == "epochs") return std::to_string(cfg.train.epochs);
  if (key == "eps") return num(cfg.train.eps);
  if (key == "self_label_threshold") return num(cfg.self_label_threshold);
  if (key == "self_label_iterations") return std::to_string(cfg.self_label_iterations);
  if (key == "prune_threshold") return num(cfg.prune_threshold);
  if (key == "mode") return cfg.mode == ClusterMode::Joint ? "joint" : "per_role";
  if (key == "seed") return std::to_string(cfg.seed);
  if (key == "kmeans_max_iters") return std::to_string(cfg.kmeans_max_iters);
  if (key == "kmeans_tol") return num(cfg.kmeans_tol);
  if (key == "threads") return std::to_string(cfg.threads);
  throw config_error("config: unknown key \"" + key + "\"");
}

/// Flat key=value text; '#' starts a comment.
inline void apply_config_text(PipelineConfig& cfg, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) + ": expected key=value");
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config \"" + path + "\"");
  PipelineConfig cfg;
  apply_config_text(cfg, in);
  return cfg;
}

inline void validate(const PipelineConfig& cfg) {
  if (cfg.corpus.empty()) throw config_error("config: corpus path is required");
  if (cfg.output_dir.empty()) throw config_error("config: output_dir is required");
  if (!(cfg.prune_threshold >= 0.0 && cfg.prune_threshold <= 1.0))
    throw config_error("config: prune_threshold must be in [0, 1]");
  if (cfg.clusters < 2) throw config_error("config: clusters must be >= 2");
  if (cfg.k < 1) throw config_error("config: k must be >= 1");
  if (!(cfg.self_label_threshold >= 0.0)) throw config_error("config: self_label_threshold must be >= 0");
  validate(cfg.train);
}

}  // namespace tscan
