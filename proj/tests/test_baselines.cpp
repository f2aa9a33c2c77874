#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace vdt;

namespace {

Dataset line(std::initializer_list<double> xs) {
  Dataset ds;
  ds.points.resize(Eigen::Index(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) ds.points(i++, 0) = x;
  return ds;
}

std::vector<Index> row_of(const SparseKnnTransition& m, std::size_t i) {
  return {m.col_indices.begin() + std::ptrdiff_t(m.row_offsets[i]), m.col_indices.begin() + std::ptrdiff_t(m.row_offsets[i + 1])};
}

}  // namespace

TEST(ExactTransition, TwoPoints) {
  const auto p = exact_transition(line({0, 2}), 1.0);
  EXPECT_EQ(p.p(0, 1), 1.0);
  EXPECT_EQ(p.p(1, 0), 1.0);
  EXPECT_EQ(p.p(0, 0), 0.0);
}

TEST(ExactTransition, ThreePointRow) {
  const auto p = exact_transition(line({0, 1, 3}), 1.0);
  const double e = std::exp(-0.5) / (std::exp(-0.5) + std::exp(-4.5));
  EXPECT_NEAR(p.p(0, 1), e, 1e-15);
  EXPECT_NEAR(p.p(0, 2), 1 - e, 1e-15);
  EXPECT_NEAR(p.p(0, 1), 0.982, 5e-4);
}

TEST(ExactTransition, EquilateralRowsAreUniform) {
  Dataset tet;
  tet.points.resize(4, 3);
  tet.points << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
  const auto p = exact_transition(tet, 0.7);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(p.p(i, j), i == j ? 0.0 : 1.0 / 3.0, 1e-15);
}

TEST(ExactTransition, MatchesOracleAndCaps) {
  std::mt19937_64 rng(1);
  const Dataset ds = oracle::random_dataset(60, 3, rng);
  EXPECT_LT((exact_transition(ds, 0.4).p - oracle::dense_posterior(ds.points, 0.4)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(exact_transition(ds, 0.4, 50), Error);
  EXPECT_THROW(exact_transition(ds, 0.0), Error);
}

TEST(LogLikelihood, MatchesOracle) {
  std::mt19937_64 rng(2);
  const Dataset ds = oracle::random_dataset(50, 2, rng);
  EXPECT_NEAR(log_likelihood(ds, 0.5), oracle::log_likelihood(ds.points, 0.5), 1e-9);
}

TEST(KnnBuild, CollinearK1) {
  const Dataset ds = line({0, 1, 3});
  const auto m = knn_build(ds, build_tree(ds), 1, 1.0);
  EXPECT_EQ(row_of(m, 0), (std::vector<Index>{1}));
  EXPECT_EQ(row_of(m, 1), (std::vector<Index>{0}));
  EXPECT_EQ(row_of(m, 2), (std::vector<Index>{1}));
  for (double p : m.probs) EXPECT_EQ(p, 1.0);
}

TEST(KnnBuild, TiesGoToLowerIndex) {
  const Dataset ds = line({0, -1, 1, 5});
  const auto m = knn_build(ds, build_tree(ds), 1, 1.0);
  EXPECT_EQ(row_of(m, 0), (std::vector<Index>{1}));
}

TEST(KnnBuild, MatchesBruteForceNeighbours) {
  std::mt19937_64 rng(512);
  for (int rep = 0; rep < 3; ++rep) {
    const Dataset ds = oracle::random_dataset(512, 1 + rep * 3, rng);
    const auto m = knn_build(ds, build_tree(ds), 8, 1.0);
    for (std::size_t i = 0; i < 512; ++i) {
      ASSERT_EQ(row_of(m, i), oracle::knn(ds.points, Index(i), 8)) << i;
      double s = 0;
      for (std::size_t e = m.row_offsets[i]; e < m.row_offsets[i + 1]; ++e) s += m.probs[e];
      ASSERT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(KnnBuild, FullKIsExactModel) {
  std::mt19937_64 rng(3);
  const Dataset ds = oracle::random_dataset(40, 2, rng);
  const auto m = knn_build(ds, build_tree(ds), 39, 0.6);
  EXPECT_LT((densify(m) - exact_transition(ds, 0.6).p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KnnBuild, Errors) {
  const Dataset ds = line({0, 1, 3});
  const auto t = build_tree(ds);
  EXPECT_THROW(knn_build(ds, t, 0, 1.0), Error);
  EXPECT_THROW(knn_build(ds, t, 3, 1.0), Error);
  EXPECT_THROW(knn_build(ds, t, 1, -1.0), Error);
}

TEST(KnnMatvec, OnesSwapAndDense) {
  std::mt19937_64 rng(4);
  const Dataset ds = oracle::random_dataset(100, 2, rng);
  const auto m = knn_build(ds, build_tree(ds), 5, 0.5);
  EXPECT_LT((knn_matvec(m, RowMatrix::Ones(100, 1)).array() - 1.0).abs().maxCoeff(), 1e-12);
  const RowMatrix y = RowMatrix::Random(100, 3);
  EXPECT_LT((knn_matvec(m, y) - densify(m) * y).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(knn_matvec(m, RowMatrix::Ones(99, 1)), Error);

  const Dataset two = line({0, 2});
  const auto m2 = knn_build(two, build_tree(two), 1, 1.0);
  RowMatrix v(2, 1);
  v << 5, 7;
  const RowMatrix out = knn_matvec(m2, v);
  EXPECT_EQ(out(0, 0), 7.0);
  EXPECT_EQ(out(1, 0), 5.0);
}

TEST(KnnRefine, EqualsFreshBuild) {
  std::mt19937_64 rng(64);
  const Dataset ds = oracle::random_dataset(64, 3, rng);
  const auto t = build_tree(ds);
  const auto k2 = knn_build(ds, t, 2, 0.8);
  const auto k3 = knn_refine(k2, ds, t, 3);
  const auto fresh = knn_build(ds, t, 3, 0.8);
  EXPECT_EQ(k3.col_indices, fresh.col_indices);
  EXPECT_EQ(k3.probs, fresh.probs);
  EXPECT_THROW(knn_refine(k2, ds, t, 2), Error);
  const auto full = knn_refine(k2, ds, t, 63);
  EXPECT_LT((densify(full) - exact_transition(ds, 0.8).p).cwiseAbs().maxCoeff(), 1e-12);
}
