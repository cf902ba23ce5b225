#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "test_support.hpp"
#include "tscan/neighbors.hpp"

using namespace tscan;

namespace {

EmbeddingSet from_rows(std::initializer_list<std::pair<double, double>> rows) {
  EmbeddingSet s;
  s.vectors.resize(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::Index r = 0;
  for (const auto& [x, y] : rows) {
    s.ids.push_back("e" + std::to_string(r + 1));
    s.vectors(r, 0) = x;
    s.vectors(r, 1) = y;
    ++r;
  }
  return l2_normalize(s);
}

std::vector<std::vector<std::size_t>> indices(const NeighborTable& t) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& row : t.rows) {
    out.emplace_back();
    for (const auto& nb : row) out.back().push_back(nb.index);
  }
  return out;
}

}  // namespace

TEST(MineNeighbors, HandComputedTable) {
  // dot products: e1.e2 = 0.9/sqrt(0.82) ~ 0.9939, e1.e3 = 0, e2.e3 ~ 0.1104
  const auto set = from_rows({{1, 0}, {0.9, 0.1}, {0, 1}});
  const auto t = mine_neighbors(set, 1);
  EXPECT_EQ(t.rows[0][0].index, 1u);
  EXPECT_NEAR(t.rows[0][0].similarity, 0.9 / std::sqrt(0.82), 1e-12);
  EXPECT_EQ(t.rows[1][0].index, 0u);
  EXPECT_EQ(t.rows[2][0].index, 1u);
}

TEST(MineNeighbors, DuplicatesPickEachOther) {
  const auto set = from_rows({{1, 2}, {1, 2}, {-3, 1}});
  const auto t = mine_neighbors(set, 1);
  EXPECT_EQ(t.rows[0][0].index, 1u);
  EXPECT_EQ(t.rows[1][0].index, 0u);
}

TEST(MineNeighbors, OrthonormalBasisTiesGoToLowerIndex) {
  EmbeddingSet s;
  s.vectors = RowMatrix::Identity(5, 5);
  for (int i = 0; i < 5; ++i) s.ids.push_back("b" + std::to_string(i));
  s.normalized = true;
  const auto t = mine_neighbors(s, 1);
  for (std::size_t a = 0; a < 5; ++a) {
    EXPECT_EQ(t.rows[a][0].index, a == 0 ? 1u : 0u);
    EXPECT_EQ(t.rows[a][0].similarity, 0.0);
  }
  const auto t3 = mine_neighbors(s, 3);
  EXPECT_EQ(indices(t3)[2], (std::vector<std::size_t>{0, 1, 3}));
}

TEST(MineNeighbors, Preconditions) {
  auto set = oracle::random_unit_set(5, 3, 1);
  EXPECT_THROW(mine_neighbors(set, 5), Error);
  EXPECT_THROW(mine_neighbors(set, 0), Error);
  set.normalized = false;
  EXPECT_THROW(mine_neighbors(set, 1), Error);
}

TEST(MineNeighbors, MatchesBruteForce) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto set = oracle::random_unit_set(300, 12, seed);
    const auto t = mine_neighbors(set, 7);
    EXPECT_EQ(indices(t), oracle::brute_force_knn(set.vectors, 7));
    for (const auto& row : t.rows)
      for (std::size_t j = 1; j < row.size(); ++j) EXPECT_GE(row[j - 1].similarity, row[j].similarity);
  }
}

TEST(MineNeighbors, RowPermutationEquivariance) {
  const auto set = oracle::random_unit_set(120, 8, 42);
  std::vector<std::size_t> perm(120);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(7);
  rng.shuffle(perm);
  const auto permuted = select_rows(set, perm);
  const auto base = mine_neighbors(set, 4);
  const auto moved = mine_neighbors(permuted, 4);
  // moved row i corresponds to original row perm[i]
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(perm[moved.rows[i][j].index], base.rows[perm[i]][j].index);
}

TEST(MineNeighbors, ThreadCountDoesNotChangeResult) {
  const auto set = oracle::random_unit_set(700, 10, 8);
  const auto one = mine_neighbors(set, 5, 1);
  const auto four = mine_neighbors(set, 5, 4);
  ASSERT_EQ(one.rows.size(), four.rows.size());
  for (std::size_t a = 0; a < one.rows.size(); ++a) EXPECT_EQ(one.rows[a], four.rows[a]);
}

TEST(NeighborDump, FormatAndReadBack) {
  const auto dir = testing_support::scratch_dir("nb");
  const auto set = from_rows({{1, 0}, {0.9, 0.1}, {0, 1}});
  const auto t = mine_neighbors(set, 2);
  write_neighbors(t, set.ids, (dir / "n.tsv").string());
  const auto text = testing_support::read_text(dir / "n.tsv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "e1\te2:0.993884,e3:0.000000");
  const auto back = read_neighbors((dir / "n.tsv").string(), set.ids);
  EXPECT_EQ(indices(back), indices(t));
}
