#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace vdt;

TEST(Matvec, TwoPointSwap) {
  RowMatrix pts(2, 1);
  pts << 0, 2;
  auto m = fit(oracle::hand_tree(pts, {{0, 1}}));
  Vector y(2);
  y << 5, 7;
  const Vector out = matvec(m, y);
  EXPECT_EQ(out(0), 7.0);
  EXPECT_EQ(out(1), 5.0);
}

TEST(Matvec, OnesStayOnes) {
  const Dataset ds = make_synthetic(SyntheticKind::two_gaussians, 300, 3, 1);
  auto m = fit(oracle::tree_of(ds));
  RefineOptions opts;
  opts.blocks_max = 1200;
  refine(m, opts);
  const RowMatrix out = matvec(m, RowMatrix(RowMatrix::Ones(300, 2)));
  EXPECT_LT((out.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Matvec, MatchesDenseExpansionAndCountsVisits) {
  std::mt19937_64 rng(32);
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset ds = oracle::random_dataset(32, 2, rng);
    auto m = oracle::random_partition(oracle::tree_of(ds), 25, rng);
    m.set_sigma(0.6);
    optimize_q(m);
    const RowMatrix y = RowMatrix::Random(32, 3);
    std::size_t visits = 0;
    const RowMatrix fast = matvec(m, y, &visits);
    EXPECT_LT((fast - dense_expand(m) * y).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(visits, 32 + m.block_count());
  }
}

TEST(Matvec, ShapeAndStateErrors) {
  RowMatrix pts(3, 1);
  pts << 0, 1, 2;
  auto tree = oracle::hand_tree(pts, {{0, 1}, {3, 2}});
  auto m = coarsest_partition(tree);
  EXPECT_THROW(matvec(m, RowMatrix(RowMatrix::Ones(3, 1))), Error);  // q not optimised
  m.set_sigma(1.0);
  optimize_q(m);
  EXPECT_THROW(matvec(m, RowMatrix(RowMatrix::Ones(4, 1))), Error);
}

TEST(DenseExpand, TiedEntriesAndFullyRefined) {
  // Shape ((0,1),(2,(3,(4,5)))): rows {0,1} against columns {2..5} is one
  // sibling block.
  RowMatrix pts(6, 1);
  pts << 0, 0.3, 2, 2.2, 5, 5.1;
  auto tree = oracle::hand_tree(pts, {{0, 1}, {4, 5}, {3, 7}, {2, 8}, {6, 9}});
  auto m = coarsest_partition(tree);
  m.set_sigma(1.0);
  optimize_q(m);
  const RowMatrix q = dense_expand(m);
  // rows {0,1} x columns {2,3,4,5} share one block
  for (int i : {0, 1})
    for (int j : {2, 3, 4, 5}) EXPECT_EQ(q(i, j), q(0, 2));
  EXPECT_EQ(q(0, 0), 0.0);

  std::set<double> distinct;
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j)
      if (i != j) distinct.insert(q(i, j));
  EXPECT_LE(distinct.size(), 10u);

  auto fine = finest_partition(tree);
  fine.set_sigma(1.0);
  optimize_q(fine);
  EXPECT_LT((dense_expand(fine) - oracle::dense_posterior(pts, 1.0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DenseExpand, CoarsestFourPointsHasAtMostSixValues) {
  std::mt19937_64 rng(4);
  auto m = fit(oracle::tree_of(oracle::random_dataset(4, 2, rng)));
  const RowMatrix q = dense_expand(m);
  std::set<double> distinct;
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      if (i != j) distinct.insert(q(i, j));
  EXPECT_LE(distinct.size(), 6u);
}

TEST(LabelPropagate, AlphaZeroReturnsInitial) {
  const Dataset ds = make_synthetic(SyntheticKind::two_gaussians, 50, 2, 1);
  const auto m = fit(oracle::tree_of(ds));
  const auto y0 = initial_labels(50, 2, ds.labels, {0, 1, 40});
  const auto y = label_propagate(m, y0, 0.0, 1);
  EXPECT_EQ(y.values, y0.values);
  EXPECT_THROW(label_propagate(m, y0, 1.0, 1), Error);
  EXPECT_THROW(label_propagate(m, y0, -0.1, 1), Error);
}

TEST(LabelPropagate, ReachesClosedFormFixedPoint) {
  std::mt19937_64 rng(6);
  const Dataset ds = oracle::random_dataset(40, 2, rng);
  auto m = oracle::random_partition(oracle::tree_of(ds), 30, rng);
  m.set_sigma(0.8);
  optimize_q(m);
  std::vector<int> labels(40, kUnlabeled);
  labels[3] = 0;
  labels[17] = 1;
  labels[29] = 2;
  const auto y0 = initial_labels(40, 3, labels, {3, 17, 29});
  const auto y = label_propagate(m, y0, 0.01, 500);
  EXPECT_LT((y.values - oracle::lp_limit(dense_expand(m), y0.values, 0.01)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LabelPropagate, FullyRefinedMatchesDenseExact) {
  std::mt19937_64 rng(7);
  const Dataset ds = oracle::random_dataset(30, 2, rng);
  auto m = finest_partition(oracle::tree_of(ds));
  m.set_sigma(0.5);
  optimize_q(m);
  std::vector<int> labels(30, kUnlabeled);
  labels[0] = 0;
  labels[5] = 1;
  const auto y0 = initial_labels(30, 2, labels, {0, 5});
  const auto y = label_propagate(m, y0, 0.5, 100);
  const RowMatrix ref = oracle::dense_lp(oracle::dense_posterior(ds.points, 0.5), y0.values, 0.5, 100);
  EXPECT_LT((y.values - ref).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(InitialLabels, Errors) {
  EXPECT_THROW(initial_labels(3, 2, {0, kUnlabeled, 1}, {1}), Error);
  EXPECT_THROW(initial_labels(3, 2, {0, 1, 1}, {5}), Error);
  EXPECT_THROW(initial_labels(3, 0, {0, 1, 1}, {0}), Error);
}

TEST(Ccr, SimpleCases) {
  LabelMatrix y{RowMatrix(4, 2), 2};
  y.values << 1, 0, 0, 1, 1, 0, 0, 1;
  const std::vector<int> truth{0, 1, 0, 1};
  EXPECT_EQ(predict_and_ccr(y, truth, {0, 1, 2, 3}), 1.0);
  y.values.setZero();
  y.values.col(0).setOnes();
  EXPECT_EQ(predict_and_ccr(y, truth, {0, 1, 2, 3}), 0.5);
  EXPECT_THROW(predict_and_ccr(y, truth, {}), Error);
}

TEST(Ccr, TiesGoToLowestClass) {
  LabelMatrix y{RowMatrix::Zero(1, 3), 3};
  EXPECT_EQ(predict(y)[0], 0);
  y.values << 0, 2, 2;
  EXPECT_EQ(predict(y)[0], 1);
}

TEST(HeldOut, ExcludesTrainingAndUnlabeled) {
  EXPECT_EQ(held_out({0, kUnlabeled, 1, 1}, {2}), (std::vector<Index>{0, 3}));
}
