#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "tscan/embeddings.hpp"
#include "tscan/error.hpp"

namespace tscan {

struct Neighbor {
  std::size_t index = 0;
  double similarity = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// k nearest neighbors per anchor, most similar first.
struct NeighborTable {
  std::size_t k = 0;
  std::vector<std::vector<Neighbor>> rows;
};

/// Ranking order: higher similarity first, lower index on ties.
inline bool neighbor_before(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.index < b.index;
}

/// Exact cosine kNN over a normalized set. Anchors are processed in fixed
/// blocks, so the result does not depend on `threads`.
inline NeighborTable mine_neighbors(const EmbeddingSet& set, std::size_t k, unsigned threads = 1) {
  require_normalized(set);
  const std::size_t n = set.count();
  if (k < 1) throw config_error("k must be >= 1");
  if (k >= n) throw config_error("k must be smaller than the number of embeddings");

  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  NeighborTable table;
  table.k = k;
  table.rows.resize(n);

  auto work = [&](std::size_t first_block, std::size_t stride) {
    std::vector<Neighbor> best;
    RowMatrix sims(static_cast<Eigen::Index>(kBlock), static_cast<Eigen::Index>(n));
    for (std::size_t b = first_block; b < blocks; b += stride) {
      const std::size_t lo = b * kBlock;
      const std::size_t len = std::min(kBlock, n - lo);
      sims.topRows(static_cast<Eigen::Index>(len)).noalias() =
          set.vectors.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(len)) *
          set.vectors.transpose();
      for (std::size_t a = 0; a < len; ++a) {
        const std::size_t anchor = lo + a;
        const double* row = sims.data() + a * n;
        best.clear();
        // running top-k kept sorted by neighbor_before; candidates arrive in
        // index order, so an equal similarity never displaces an earlier one
        for (std::size_t j = 0; j < n; ++j) {
          if (j == anchor) continue;
          const Neighbor cand{j, row[j]};
          if (best.size() == k && !neighbor_before(cand, best.back())) continue;
          if (best.size() == k) best.pop_back();
          best.insert(std::upper_bound(best.begin(), best.end(), cand, neighbor_before), cand);
        }
        table.rows[anchor] = best;
      }
    }
  };

  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(blocks)));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  return table;
}

inline void write_neighbors(const NeighborTable& table, const std::vector<std::string>& ids, std::ostream& out) {
  char buf[32];
  for (std::size_t a = 0; a < table.rows.size(); ++a) {
    out << ids.at(a) << '\t';
    for (std::size_t j = 0; j < table.rows[a].size(); ++j) {
      const auto& nb = table.rows[a][j];
      std::snprintf(buf, sizeof buf, "%.6f", nb.similarity);
      out << (j ? "," : "") << ids.at(nb.index) << ':' << buf;
    }
    out << '\n';
  }
}

inline void write_neighbors(const NeighborTable& table, const std::vector<std::string>& ids, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path + "\"");
  write_neighbors(table, ids, out);
}

/// Reads a neighbor dump, resolving ids against the embedding row order.
inline NeighborTable read_neighbors(const std::string& path, const std::vector<std::string>& ids) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open neighbor table \"" + path + "\"");
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < ids.size(); ++i) row_of.emplace(ids[i], i);
  auto lookup = [&](const std::string& id) {
    const auto it = row_of.find(id);
    if (it == row_of.end()) throw input_error("neighbor table: unknown id \"" + id + "\"");
    return it->second;
  };

  NeighborTable table;
  table.rows.resize(ids.size());
  std::vector<bool> seen(ids.size(), false);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw input_error("neighbor table: missing tab");
    const std::size_t anchor = lookup(line.substr(0, tab));
    std::vector<Neighbor> row;
    std::stringstream ss(line.substr(tab + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.rfind(':');
      if (colon == std::string::npos) throw input_error("neighbor table: malformed entry \"" + item + "\"");
      row.push_back({lookup(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    }
    if (row.empty()) throw input_error("neighbor table: anchor without neighbors");
    if (table.k == 0) table.k = row.size();
    if (row.size() != table.k) throw input_error("neighbor table: inconsistent k");
    table.rows[anchor] = std::move(row);
    seen[anchor] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw input_error("neighbor table: no row for \"" + ids[i] + "\"");
  return table;
}

}  // namespace tscan
