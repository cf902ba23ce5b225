#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "tscan/corpus.hpp"
#include "tscan/error.hpp"
#include "tscan/random.hpp"

namespace tscan {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense utterance vectors, one row per id.
struct EmbeddingSet {
  std::vector<std::string> ids;
  RowMatrix vectors;
  bool normalized = false;

  std::size_t count() const { return ids.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
};

inline constexpr double kUnitNormTolerance = 1e-6;

/// Checks the set invariants; throws on the first violation.
inline void validate(const EmbeddingSet& set) {
  if (set.ids.empty()) throw input_error("empty embedding set");
  if (static_cast<std::size_t>(set.vectors.rows()) != set.ids.size())
    throw input_error("embedding row count does not match id count");
  if (set.vectors.cols() < 2) throw input_error("embedding dim must be >= 2");
  std::unordered_set<std::string> seen;
  for (const auto& id : set.ids)
    if (!seen.insert(id).second) throw input_error("duplicate embedding id \"" + id + "\"");
  if (!set.vectors.allFinite()) throw numeric_error("embedding contains NaN or Inf");
  if (set.normalized)
    for (Eigen::Index r = 0; r < set.vectors.rows(); ++r)
      if (std::abs(set.vectors.row(r).norm() - 1.0) > kUnitNormTolerance)
        throw input_error("embedding \"" + set.ids[static_cast<std::size_t>(r)] +
                          "\" flagged normalized but norm != 1");
}

inline void require_normalized(const EmbeddingSet& set) {
  if (!set.normalized) throw input_error("embedding set must be L2-normalized");
}

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline void put_f32(std::ostream& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline double get_f32(const unsigned char* p) {
  return static_cast<double>(std::bit_cast<float>(get_u32(p)));
}

inline std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open \"" + path + "\"");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Parses a "magic, version=1, then n u32 fields" header.
inline std::vector<std::uint32_t> read_header(const std::vector<unsigned char>& bytes,
                                              std::string_view magic, std::size_t fields,
                                              const std::string& what) {
  if (bytes.size() < 8 + 4 * fields || std::memcmp(bytes.data(), magic.data(), 4) != 0)
    throw input_error(what + ": bad magic");
  if (get_u32(bytes.data() + 4) != 1) throw input_error(what + ": unsupported version");
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < fields; ++i) out.push_back(get_u32(bytes.data() + 8 + 4 * i));
  return out;
}

}  // namespace detail

/// Writes the TSCN payload to `path` and the ids sidecar to `path + ".ids"`.
inline void write_embeddings(const EmbeddingSet& set, const std::string& path) {
  validate(set);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write \"" + path + "\"");
    out.write("TSCN", 4);
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(set.count()));
    detail::put_u32(out, static_cast<std::uint32_t>(set.dim()));
    for (Eigen::Index r = 0; r < set.vectors.rows(); ++r)
      for (Eigen::Index c = 0; c < set.vectors.cols(); ++c) detail::put_f32(out, set.vectors(r, c));
  }
  std::ofstream ids(path + ".ids", std::ios::binary);
  if (!ids) throw input_error("cannot write \"" + path + ".ids\"");
  for (const auto& id : set.ids) ids << id << '\n';
}

/// Reads a TSCN file and its sidecar. The normalized flag is inferred from row norms.
inline EmbeddingSet read_embeddings(const std::string& path) {
  const auto bytes = detail::read_all(path);
  const auto header = detail::read_header(bytes, "TSCN", 2, "embeddings");
  const std::size_t count = header[0], dim = header[1];
  if (count == 0) throw input_error("empty embedding set");
  if (dim < 2) throw input_error("embedding dim must be >= 2");
  if (bytes.size() != 16 + 4 * count * dim) throw input_error("payload length mismatch");

  EmbeddingSet set;
  set.vectors.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  const unsigned char* p = bytes.data() + 16;
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < dim; ++c, p += 4)
      set.vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = detail::get_f32(p);

  std::ifstream ids(path + ".ids");
  if (!ids) throw input_error("cannot open ids sidecar \"" + path + ".ids\"");
  std::string line;
  while (std::getline(ids, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) set.ids.push_back(line);
  }
  if (set.ids.size() != count) throw input_error("ids sidecar length does not match count");

  bool unit = true;
  for (Eigen::Index r = 0; r < set.vectors.rows() && unit; ++r)
    unit = std::abs(set.vectors.row(r).norm() - 1.0) <= kUnitNormTolerance;
  set.normalized = unit;
  validate(set);
  return set;
}

inline EmbeddingSet l2_normalize(const EmbeddingSet& set) {
  if (!set.vectors.allFinite()) throw numeric_error("embedding contains NaN or Inf");
  EmbeddingSet out = set;
  for (Eigen::Index r = 0; r < out.vectors.rows(); ++r) {
    const double n = out.vectors.row(r).norm();
    if (n == 0.0)
      throw input_error("zero-norm embedding \"" + set.ids[static_cast<std::size_t>(r)] + "\"");
    out.vectors.row(r) /= n;
  }
  out.normalized = true;
  return out;
}

/// Rows of `set` restricted to `indices`, in that order.
inline EmbeddingSet select_rows(const EmbeddingSet& set, const std::vector<std::size_t>& indices) {
  EmbeddingSet out;
  out.normalized = set.normalized;
  out.vectors.resize(static_cast<Eigen::Index>(indices.size()), set.vectors.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.ids.push_back(set.ids.at(indices[i]));
    out.vectors.row(static_cast<Eigen::Index>(i)) = set.vectors.row(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

/// Reorders `set` to follow `ids`; every id must be present.
inline EmbeddingSet align_to(const EmbeddingSet& set, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < set.ids.size(); ++i) row_of.emplace(set.ids[i], i);
  std::vector<std::size_t> idx;
  idx.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = row_of.find(id);
    if (it == row_of.end()) throw input_error("no embedding for utterance \"" + id + "\"");
    idx.push_back(it->second);
  }
  return select_rows(set, idx);
}

/// Lowercased whitespace tokens followed by adjacent-word bigrams.
inline std::vector<std::string> ngram_features(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  std::vector<std::string> features = words;
  for (std::size_t i = 1; i < words.size(); ++i) features.push_back(words[i - 1] + " " + words[i]);
  return features;
}

/// Signed feature hashing of word uni- and bigrams, L2-normalized.
inline Eigen::VectorXd hashed_ngram_vector(std::string_view text, std::size_t dim, std::uint64_t seed) {
  const auto features = ngram_features(text);
  if (features.empty()) throw input_error("empty text");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  const std::uint64_t basis = mix64(seed);
  for (const auto& f : features) {
    const std::uint64_t h = fnv1a64(f, basis);
    const double sign = (mix64(h) & 1U) ? 1.0 : -1.0;
    v(static_cast<Eigen::Index>(h % dim)) += sign;
  }
  const double n = v.norm();
  // Every feature could cancel out only through bucket collisions.
  if (n == 0.0) v(static_cast<Eigen::Index>(fnv1a64(text, basis) % dim)) = 1.0;
  else v /= n;
  return v;
}

inline EmbeddingSet hashed_ngram_embed(const Corpus& corpus, std::size_t dim, std::uint64_t seed) {
  if (dim < 8) throw config_error("hashed embedding dim must be >= 8");
  const auto utts = corpus.utterances();
  EmbeddingSet set;
  set.vectors.resize(static_cast<Eigen::Index>(utts.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < utts.size(); ++i) {
    if (utts[i]->text.empty()) throw input_error("empty text");
    set.ids.push_back(utts[i]->utterance_id);
    set.vectors.row(static_cast<Eigen::Index>(i)) = hashed_ngram_vector(utts[i]->text, dim, seed).transpose();
  }
  set.normalized = true;
  return set;
}

/// Controllable-difficulty embedder: each state gets a random mean direction
/// scaled by `separation`; each utterance adds isotropic Gaussian noise with
/// per-coordinate deviation noise / sqrt(dim) (expected noise norm ~ noise),
/// then the row is normalized.
inline EmbeddingSet gaussian_oracle_embed(const GroundTruth& truth, const std::vector<std::string>& ids,
                                          std::size_t dim, double separation, double noise,
                                          std::uint64_t seed) {
  const int states = truth.num_states();
  if (dim < 2 || static_cast<int>(dim) < states) throw config_error("oracle dim must be >= number of states");
  if (!(separation > 0.0)) throw config_error("separation must be > 0");
  if (!(noise >= 0.0)) throw config_error("noise must be >= 0");
  const auto d = static_cast<Eigen::Index>(dim);

  Rng mean_rng(stream_seed(seed, "oracle-means"));
  RowMatrix means(states, d);
  for (int s = 0; s < states; ++s) {
    Eigen::VectorXd m(d);
    do {
      for (Eigen::Index c = 0; c < d; ++c) m(c) = mean_rng.normal();
    } while (m.norm() == 0.0);
    means.row(s) = (separation / m.norm()) * m.transpose();
  }

  Rng noise_rng(stream_seed(seed, "oracle-noise"));
  const double sigma = noise / std::sqrt(static_cast<double>(dim));
  EmbeddingSet set;
  set.ids = ids;
  set.vectors.resize(static_cast<Eigen::Index>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = truth.state_of.find(ids[i]);
    if (it == truth.state_of.end()) throw input_error("no ground truth for \"" + ids[i] + "\"");
    auto row = set.vectors.row(static_cast<Eigen::Index>(i));
    row = means.row(it->second);
    for (Eigen::Index c = 0; c < d; ++c) row(c) += sigma * noise_rng.normal();
  }
  return l2_normalize(set);
}

inline EmbeddingSet gaussian_oracle_embed(const GroundTruth& truth, const Corpus& corpus, std::size_t dim,
                                          double separation, double noise, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto* u : corpus.utterances()) ids.push_back(u->utterance_id);
  return gaussian_oracle_embed(truth, ids, dim, separation, noise, seed);
}

}  // namespace tscan
