#pragma once

// Reference transition matrices: the exact dense model and the row-wise
// k-nearest-neighbour sparsification, both with Gaussian posterior weights.

#include "vdt/dataset.hpp"
#include "vdt/partition_tree.hpp"

#include <numbers>
#include <vector>

namespace vdt {

struct DenseTransition {
  RowMatrix p;  // zero diagonal, rows sum to 1
  double sigma = 0.0;
};

namespace detail {

inline double row_sq_dist(const RowMatrix& pts, Eigen::Index i, Eigen::Index j) {
  return (pts.row(i) - pts.row(j)).squaredNorm();
}

}  // namespace detail

/// p_ij = exp(-|x_i - x_j|^2 / 2 sigma^2) / sum_{l != i} exp(...), with the
/// row minimum distance shifted out before exponentiating.
inline DenseTransition exact_transition(const Dataset& ds, double sigma, std::size_t cap = 8192) {
  const auto n = static_cast<Eigen::Index>(ds.n());
  if (ds.n() > cap) detail::fail("exact_transition: N = ", n, " exceeds cap ", cap);
  if (!(sigma > 0.0)) detail::fail("exact_transition: sigma must be positive");
  DenseTransition t{RowMatrix(n, n), sigma};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = t.p.row(i);
    double lo = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      row(j) = detail::row_sq_dist(ds.points, i, j);
      lo = std::min(lo, row(j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      row(j) = j == i ? 0.0 : std::exp(-(row(j) - lo) * inv);
      sum += row(j);
    }
    row /= sum;
  }
  return t;
}

inline RowMatrix multiply(const DenseTransition& t, const RowMatrix& y) {
  if (y.rows() != t.p.cols()) detail::fail("multiply: shape mismatch");
  return t.p * y;
}

/// Dense log p(D) = sum_i log sum_{j != i} (1/(N-1)) N(x_i; x_j, sigma^2 I).
inline double log_likelihood(const Dataset& ds, double sigma) {
  const auto n = static_cast<Eigen::Index>(ds.n());
  const double d = double(ds.dim());
  const double log_norm = -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) - std::log(double(n - 1));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = detail::kNegInf;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) acc = detail::log_add(acc, -detail::row_sq_dist(ds.points, i, j) * inv);
    total += acc + log_norm;
  }
  return total;
}

/// Row-wise kNN transition matrix in CSR form. Entries of a row are ordered
/// by (distance, index).
struct SparseKnnTransition {
  std::vector<std::size_t> row_offsets;
  std::vector<Index> col_indices;
  std::vector<double> probs;
  std::size_t k = 0;
  double sigma = 0.0;

  std::size_t n() const { return row_offsets.empty() ? 0 : row_offsets.size() - 1; }
};

namespace detail {

/// Bounding balls around node centroids, built bottom-up.
inline std::vector<double> ball_radii(const PartitionTree& tree) {
  std::vector<double> r(tree.node_count(), 0.0);
  for (Index id = static_cast<Index>(tree.n()); id < tree.node_count(); ++id) {
    const auto c = tree.centroid(id);
    const Index l = tree.left(id), rt = tree.right(id);
    r[id] = std::max((c - tree.centroid(l)).norm() + r[l], (c - tree.centroid(rt)).norm() + r[rt]);
    // absorb rounding so pruning stays lossless
    r[id] = r[id] * (1.0 + 1e-12) + 1e-12 * (1.0 + c.cwiseAbs().maxCoeff());
  }
  return r;
}

struct Neighbor {
  double d2;
  Index idx;
  bool operator<(const Neighbor& o) const { return d2 < o.d2 || (d2 == o.d2 && idx < o.idx); }
};

class KnnSearch {
public:
  KnnSearch(const RowMatrix& pts, const PartitionTree& tree, std::size_t k)
      : pts_(pts), tree_(tree), k_(k), radius_(ball_radii(tree)) {
    centers_.resize(Eigen::Index(tree.node_count()), pts.cols());
    for (Index id = 0; id < tree.node_count(); ++id) centers_.row(id) = tree.centroid(id);
  }

  /// k nearest neighbours of dataset point q, sorted by (distance, index).
  std::vector<Neighbor> query(Index q) {
    heap_.clear();
    query_ = q;
    visit(tree_.root(), lower_bound(tree_.root()));
    std::sort_heap(heap_.begin(), heap_.end());
    return heap_;
  }

private:
  const RowMatrix& pts_;
  const PartitionTree& tree_;
  std::size_t k_;
  std::vector<double> radius_;
  RowMatrix centers_;
  std::vector<Neighbor> heap_;  // max-heap on (d2, idx)
  Index query_ = 0;

  double lower_bound(Index node) const {
    const double gap = (pts_.row(query_) - centers_.row(node)).norm() - radius_[node];
    return gap > 0.0 ? gap * gap : 0.0;
  }

  bool prunable(double bound) const { return heap_.size() == k_ && bound > heap_.front().d2; }

  void offer(Index idx) {
    if (idx == query_) return;
    Neighbor cand{row_sq_dist(pts_, query_, idx), idx};
    if (heap_.size() < k_) {
      heap_.push_back(cand);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (cand < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = cand;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  void visit(Index node, double bound) {
    if (tree_.is_leaf(node)) {  // the exact comparison in offer() decides ties
      offer(tree_.perm()[node]);
      return;
    }
    if (prunable(bound)) return;
    const Index l = tree_.left(node), r = tree_.right(node);
    const double bl = lower_bound(l), br = lower_bound(r);
    if (bl <= br) {
      visit(l, bl);
      visit(r, br);
    } else {
      visit(r, br);
      visit(l, bl);
    }
  }
};

inline SparseKnnTransition weights_from_neighbors(const std::vector<std::vector<Neighbor>>& rows, std::size_t k,
                                                  double sigma) {
  SparseKnnTransition m;
  m.k = k;
  m.sigma = sigma;
  m.row_offsets.reserve(rows.size() + 1);
  m.row_offsets.push_back(0);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (const auto& row : rows) {
    double sum = 0.0;
    const double lo = row.front().d2;
    const std::size_t start = m.probs.size();
    for (const auto& nb : row) {
      m.col_indices.push_back(nb.idx);
      m.probs.push_back(std::exp(-(nb.d2 - lo) * inv));
      sum += m.probs.back();
    }
    for (std::size_t e = start; e < m.probs.size(); ++e) m.probs[e] /= sum;
    m.row_offsets.push_back(m.probs.size());
  }
  return m;
}

}  // namespace detail

/// Exact k nearest neighbours of every point via a ball-pruned descent of the
/// shared partition tree; edge weights are the Gaussian posteriors
/// renormalised over the k retained edges.
inline SparseKnnTransition knn_build(const Dataset& ds, const PartitionTree& tree, std::size_t k, double sigma) {
  if (k < 1 || k > ds.n() - 1) detail::fail("knn_build: k = ", k, " outside 1..", ds.n() - 1);
  if (!(sigma > 0.0)) detail::fail("knn_build: sigma must be positive");
  if (tree.n() != ds.n()) detail::fail("knn_build: tree and dataset sizes differ");
  detail::KnnSearch search(ds.points, tree, k);
  std::vector<std::vector<detail::Neighbor>> rows(ds.n());
  for (Index i = 0; i < ds.n(); ++i) rows[i] = search.query(i);
  return detail::weights_from_neighbors(rows, k, sigma);
}

/// Raises k by re-running the neighbour search.
inline SparseKnnTransition knn_refine(const SparseKnnTransition& m, const Dataset& ds, const PartitionTree& tree,
                                      std::size_t new_k) {
  if (new_k <= m.k) detail::fail("knn_refine: new k ", new_k, " must exceed current k ", m.k);
  return knn_build(ds, tree, new_k, m.sigma);
}

inline RowMatrix knn_matvec(const SparseKnnTransition& m, const RowMatrix& y) {
  if (static_cast<std::size_t>(y.rows()) != m.n()) detail::fail("knn_matvec: expected ", m.n(), " rows, got ", y.rows());
  RowMatrix out = RowMatrix::Zero(y.rows(), y.cols());
  const auto c = y.cols();
  for (std::size_t i = 0; i < m.n(); ++i) {
    double* o = out.row(Eigen::Index(i)).data();
    for (std::size_t e = m.row_offsets[i]; e < m.row_offsets[i + 1]; ++e) {
      const double w = m.probs[e];
      const double* src = y.row(m.col_indices[e]).data();
      for (Eigen::Index k = 0; k < c; ++k) o[k] += w * src[k];
    }
  }
  return out;
}

inline RowMatrix multiply(const SparseKnnTransition& m, const RowMatrix& y) { return knn_matvec(m, y); }

inline RowMatrix densify(const SparseKnnTransition& m) {
  const auto n = Eigen::Index(m.n());
  RowMatrix p = RowMatrix::Zero(n, n);
  for (std::size_t i = 0; i < m.n(); ++i)
    for (std::size_t e = m.row_offsets[i]; e < m.row_offsets[i + 1]; ++e) p(Eigen::Index(i), m.col_indices[e]) = m.probs[e];
  return p;
}

/// "row,col,prob" triplets, one edge per line.
inline void save_triplets(const SparseKnnTransition& m, const std::string& path) {
  auto out = detail::open_out(path);
  for (std::size_t i = 0; i < m.n(); ++i)
    for (std::size_t e = m.row_offsets[i]; e < m.row_offsets[i + 1]; ++e)
      out << i << ',' << m.col_indices[e] << ',' << detail::format_double(m.probs[e]) << '\n';
}

}  // namespace vdt
