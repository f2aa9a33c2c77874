#pragma once

// Products with the block transition matrix and Label Propagation.

#include "vdt/block_model.hpp"
#include "vdt/dataset.hpp"

#include <vector>

namespace vdt {

/// Computes Q Y in O(N C + |B| C). Y holds one row per point in dataset
/// order. CollectUp sums Y over every subtree (T_A); DistributeDown walks
/// root to leaves accumulating q_AB T_B for each mark (A, B).
///
/// If `visits` is given it is incremented once per leaf reached and once per
/// mark applied (N + |B| in total).
inline RowMatrix matvec(const BlockModel& model, const RowMatrix& y, std::size_t* visits = nullptr) {
  const auto& tree = model.tree();
  const std::size_t n = tree.n();
  if (static_cast<std::size_t>(y.rows()) != n) detail::fail("matvec: expected ", n, " rows, got ", y.rows());
  if (!model.has_q()) detail::fail("matvec: q not optimized");
  const auto c = static_cast<std::size_t>(y.cols());
  const std::size_t nodes = tree.node_count();
  const auto& perm = tree.perm();

  std::vector<double> sums(nodes * c), acc(nodes * c);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t k = 0; k < c; ++k) sums[pos * c + k] = y(perm[pos], Eigen::Index(k));
  for (Index id = static_cast<Index>(n); id < nodes; ++id) {
    const double* l = &sums[tree.left(id) * c];
    const double* r = &sums[tree.right(id) * c];
    double* t = &sums[id * c];
    for (std::size_t k = 0; k < c; ++k) t[k] = l[k] + r[k];
  }

  std::size_t count = 0;
  for (Index id = static_cast<Index>(nodes); id-- > 0;) {
    double* out = &acc[id * c];
    const Index p = tree.parent(id);
    if (p == kNone)
      std::fill(out, out + c, 0.0);
    else
      std::copy_n(&acc[p * c], c, out);
    for (Index bid : model.marks(id)) {
      const auto& blk = model.block(bid);
      const double* t = &sums[blk.b * c];
      for (std::size_t k = 0; k < c; ++k) out[k] += blk.q * t[k];
      ++count;
    }
  }
  count += n;
  if (visits) *visits += count;

  RowMatrix result(y.rows(), y.cols());
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t k = 0; k < c; ++k) result(perm[pos], Eigen::Index(k)) = acc[pos * c + k];
  return result;
}

inline Vector matvec(const BlockModel& model, const Vector& y, std::size_t* visits = nullptr) {
  RowMatrix col = y;
  return matvec(model, col, visits);
}

inline RowMatrix multiply(const BlockModel& model, const RowMatrix& y) { return matvec(model, y); }

/// Materialises Q (dataset order) for small N.
inline RowMatrix dense_expand(const BlockModel& model, std::size_t cap = 2048) {
  const auto& tree = model.tree();
  const std::size_t n = tree.n();
  if (n > cap) detail::fail("dense_expand: N = ", n, " exceeds cap ", cap);
  if (!model.has_q()) detail::fail("dense_expand: q not optimized");
  const auto& perm = tree.perm();
  RowMatrix q = RowMatrix::Zero(Eigen::Index(n), Eigen::Index(n));
  for (const auto& blk : model.blocks()) {
    const auto& a = tree.node(blk.a);
    const auto& b = tree.node(blk.b);
    for (Index i = a.lo; i < a.hi; ++i)
      for (Index j = b.lo; j < b.hi; ++j) q(perm[i], perm[j]) = blk.q;
  }
  return q;
}

/// Soft-label state for Label Propagation.
struct LabelMatrix {
  RowMatrix values;  // N x C
  int classes = 0;
};

/// One-hot rows for the given labeled points, zero rows elsewhere.
inline LabelMatrix initial_labels(std::size_t n, int classes, const std::vector<int>& labels,
                                  const std::vector<Index>& labeled) {
  if (classes < 1) detail::fail("initial_labels: need at least one class");
  LabelMatrix y{RowMatrix::Zero(Eigen::Index(n), classes), classes};
  for (Index i : labeled) {
    if (i >= n) detail::fail("initial_labels: index ", i, " out of range");
    const int c = labels.at(i);
    if (c < 0 || c >= classes) detail::fail("initial_labels: point ", i, " has no valid label");
    y.values(i, c) = 1.0;
  }
  return y;
}

/// Iterates Y <- alpha P Y + (1 - alpha) Y0 `iters` times. `P` is anything
/// with a `multiply(P, RowMatrix)` overload. alpha = 0 is accepted and
/// returns Y0.
template <typename Transition>
LabelMatrix label_propagate(const Transition& p, const LabelMatrix& y0, double alpha, std::size_t iters) {
  if (!(alpha >= 0.0 && alpha < 1.0)) detail::fail("label_propagate: alpha ", alpha, " not in [0,1)");
  LabelMatrix y = y0;
  const RowMatrix base = (1.0 - alpha) * y0.values;
  for (std::size_t t = 0; t < iters; ++t) y.values = alpha * multiply(p, y.values) + base;
  return y;
}

/// Per-row argmax (ties go to the lowest class id).
inline std::vector<int> predict(const LabelMatrix& y) {
  std::vector<int> out(static_cast<std::size_t>(y.values.rows()));
  for (Eigen::Index i = 0; i < y.values.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < y.values.cols(); ++c)
      if (y.values(i, c) > y.values(i, best)) best = static_cast<int>(c);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

/// Correct classification rate over eval_indices.
inline double predict_and_ccr(const LabelMatrix& y, const std::vector<int>& truth, const std::vector<Index>& eval_indices) {
  if (eval_indices.empty()) detail::fail("ccr: empty evaluation set");
  const auto pred = predict(y);
  std::size_t correct = 0;
  for (Index i : eval_indices) {
    if (i >= pred.size() || i >= truth.size()) detail::fail("ccr: index ", i, " out of range");
    correct += pred[i] == truth[i];
  }
  return double(correct) / double(eval_indices.size());
}

/// Labeled points minus the training split: the usual evaluation set.
inline std::vector<Index> held_out(const std::vector<int>& truth, const std::vector<Index>& train) {
  std::vector<bool> used(truth.size(), false);
  for (Index i : train) used.at(i) = true;
  std::vector<Index> out;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (!used[i] && truth[i] != kUnlabeled) out.push_back(static_cast<Index>(i));
  return out;
}

}  // namespace vdt
