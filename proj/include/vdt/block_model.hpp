#pragma once

// Block-constrained transition matrix on a marked partition tree.
//
// Every block (A, B) ties the transition probabilities q_ij for i in A and
// j in B to a single value q_AB. Marks live at the data node A. Diagonal
// entries are implicit zeros and never stored.

#include "vdt/common.hpp"
#include "vdt/partition_tree.hpp"

#include <memory>
#include <numbers>
#include <optional>
#include <vector>

namespace vdt {

struct Block {
  Index a = kNone;  // data node
  Index b = kNone;  // kernel node
  double q = std::numeric_limits<double>::quiet_NaN();
  double d2 = 0.0;  // D^2_AB
  double g = 0.0;   // G_AB at the model's sigma
  std::uint32_t version = 0;
};

class BlockModel {
public:
  BlockModel() = default;
  explicit BlockModel(std::shared_ptr<const PartitionTree> tree)
      : tree_(std::move(tree)), marks_(tree_->node_count()) {}

  const PartitionTree& tree() const { return *tree_; }
  const std::shared_ptr<const PartitionTree>& tree_ptr() const { return tree_; }

  std::size_t block_count() const { return blocks_.size(); }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(Index id) const { return blocks_[id]; }
  Block& block(Index id) { return blocks_[id]; }
  const std::vector<Index>& marks(Index node) const { return marks_[node]; }

  double sigma() const { return sigma_; }
  bool has_sigma() const { return sigma_ > 0.0; }
  bool has_q() const { return q_ready_; }
  double ell() const { return ell_; }

  /// Sets the bandwidth and refreshes every cached G_AB. Invalidates ell.
  void set_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) detail::fail("sigma must be positive and finite, got ", sigma);
    sigma_ = sigma;
    for (auto& blk : blocks_) blk.g = weight(blk);
  }

  /// Adds block (a, b); q is left for the caller.
  Index add_block(Index a, Index b) {
    Block blk;
    blk.a = a;
    blk.b = b;
    blk.d2 = block_distance(*tree_, a, b);
    if (has_sigma()) blk.g = weight(blk);
    const auto id = static_cast<Index>(blocks_.size());
    blocks_.push_back(blk);
    marks_[a].push_back(id);
    return id;
  }

  /// Replaces (A, B) by (A, B_l) [same id] and (A, B_r) [returned id].
  /// Only the structure changes; q values are the caller's business.
  Index split_kernel_side(Index id) {
    const Index b = blocks_[id].b;
    if (tree_->is_leaf(b)) detail::fail("block ", id, ": kernel node is a leaf");
    auto& blk = blocks_[id];
    blk.b = tree_->left(b);
    blk.d2 = block_distance(*tree_, blk.a, blk.b);
    if (has_sigma()) blk.g = weight(blk);
    ++blk.version;
    const Index a = blk.a;
    return add_block(a, tree_->right(b));
  }

  /// Replaces (A, B) by (A_l, B) [same id] and (A_r, B) [returned id].
  Index split_data_side(Index id) {
    const Index a = blocks_[id].a;
    if (tree_->is_leaf(a)) detail::fail("block ", id, ": data node is a leaf");
    auto& list = marks_[a];
    list.erase(std::find(list.begin(), list.end(), id));
    auto& blk = blocks_[id];
    blk.a = tree_->left(a);
    blk.d2 = block_distance(*tree_, blk.a, blk.b);
    if (has_sigma()) blk.g = weight(blk);
    ++blk.version;
    auto& dest = marks_[blk.a];  // keep id order so products do not depend on split history
    dest.insert(std::lower_bound(dest.begin(), dest.end(), id), id);
    const Index b = blk.b;
    return add_block(tree_->right(a), b);
  }

  /// Model-internal bookkeeping used by optimize_q and the refinement code.
  void mark_q_ready(bool ready) { q_ready_ = ready; }
  void set_ell(double ell) { ell_ = ell; }

  /// Number of off-diagonal (i, j) cells the blocks cover.
  double covered_cells() const {
    double cells = 0.0;
    for (const auto& blk : blocks_) cells += double(tree_->count(blk.a)) * double(tree_->count(blk.b));
    return cells;
  }

private:
  double weight(const Block& blk) const {
    return -blk.d2 / (2.0 * sigma_ * sigma_ * double(tree_->count(blk.a)) * double(tree_->count(blk.b)));
  }

  std::shared_ptr<const PartitionTree> tree_;
  std::vector<Block> blocks_;
  std::vector<std::vector<Index>> marks_;
  double sigma_ = 0.0;
  double ell_ = std::numeric_limits<double>::quiet_NaN();
  bool q_ready_ = false;
};

/// Sibling blocks only: every non-root node A is marked with its sibling.
/// Yields 2(N-1) blocks.
inline BlockModel coarsest_partition(std::shared_ptr<const PartitionTree> tree) {
  BlockModel model(tree);
  for (Index id = 0; id < tree->root(); ++id) model.add_block(id, tree->sibling(id));
  return model;
}

/// All N^2 - N singleton blocks. Intended for small N (tests, oracles).
inline BlockModel finest_partition(std::shared_ptr<const PartitionTree> tree, std::size_t cap = 2048) {
  const auto n = static_cast<Index>(tree->n());
  if (n > cap) detail::fail("finest_partition: N = ", n, " exceeds cap ", cap);
  BlockModel model(tree);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) model.add_block(i, j);
  return model;
}

/// Checks that the blocks are disjoint pairs of subtrees that cover every
/// off-diagonal cell exactly once. Throws vdt::Error otherwise.
inline void validate_partition(const BlockModel& model) {
  const auto& tree = model.tree();
  const auto n = static_cast<Index>(tree.n());
  std::vector<std::pair<Index, Index>> spans;
  for (const auto& blk : model.blocks())
    if (tree.overlaps(blk.a, blk.b)) detail::fail("partition: block (", blk.a, ",", blk.b, ") overlaps itself");
  for (Index leaf = 0; leaf < n; ++leaf) {
    spans.clear();
    for (Index a = leaf; a != kNone; a = tree.parent(a))
      for (Index id : model.marks(a)) spans.emplace_back(tree.node(model.block(id).b).lo, tree.node(model.block(id).b).hi);
    std::sort(spans.begin(), spans.end());
    Index cursor = 0;
    for (auto [lo, hi] : spans) {
      if (cursor == leaf) ++cursor;
      if (lo != cursor) detail::fail("partition: row ", leaf, " is not covered exactly once near column ", cursor);
      cursor = hi;
    }
    if (cursor == leaf) ++cursor;
    if (cursor != n) detail::fail("partition: row ", leaf, " misses columns from ", cursor);
  }
}

/// Per-leaf outgoing mass sum over B(x_i) of |B| q_AB, in leaf-position order.
inline std::vector<double> row_mass(const BlockModel& model) {
  const auto& tree = model.tree();
  std::vector<double> acc(tree.node_count(), 0.0);
  for (Index id = tree.root() + 1; id-- > 0;) {
    double m = tree.parent(id) == kNone ? 0.0 : acc[tree.parent(id)];
    for (Index bid : model.marks(id)) m += double(tree.count(model.block(bid).b)) * model.block(bid).q;
    acc[id] = m;
  }
  acc.resize(tree.n());
  return acc;
}

inline double max_row_error(const BlockModel& model) {
  double worst = 0.0;
  for (double m : row_mass(model)) worst = std::max(worst, std::abs(m - 1.0));
  return worst;
}

/// Normalising constant c = -N log((2 pi)^{d/2} sigma^d (N-1)).
inline double bound_constant(std::size_t n, std::size_t d, double sigma) {
  const double nd = static_cast<double>(n), dd = static_cast<double>(d);
  return -nd * (0.5 * dd * std::log(2.0 * std::numbers::pi) + dd * std::log(sigma) + std::log(nd - 1.0));
}

struct ObjectiveTerms {
  double constant = 0.0;
  double trace = 0.0;    // -(1/2 sigma^2) sum q_AB D^2_AB
  double entropy = 0.0;  // sum of row entropies
  double total() const { return constant + trace + entropy; }
};

inline ObjectiveTerms objective_decomposition(const BlockModel& model) {
  if (!model.has_q()) detail::fail("objective: q not optimized");
  const auto& tree = model.tree();
  ObjectiveTerms t;
  t.constant = bound_constant(tree.n(), tree.dim(), model.sigma());
  const double inv = 1.0 / (2.0 * model.sigma() * model.sigma());
  for (const auto& blk : model.blocks()) {
    const double cells = double(tree.count(blk.a)) * double(tree.count(blk.b));
    t.trace -= inv * blk.q * blk.d2;
    t.entropy -= cells * detail::xlogx(blk.q);
  }
  return t;
}

/// Variational lower bound l(D) for the model's current q and sigma.
inline double lower_bound(const BlockModel& model) { return objective_decomposition(model).total(); }

/// Maximises l(D) over q subject to every row summing to one.
///
/// Upward pass: logW_A = logsumexp({log|B| + G_AB : B marked at A} u {z_A}),
/// where z_A = (|A_l| logW_{A_l} + |A_r| logW_{A_r}) / |A| for internal A.
/// Downward pass from logmu_root = 0: log q_AB = logmu_A + G_AB - logW_A and
/// both children receive logmu_A + z_A - logW_A. O(N + |B|).
/// Returns the new l(D), which is also cached on the model.
inline double optimize_q(BlockModel& model) {
  if (!model.has_sigma()) detail::fail("optimize_q: sigma unset");
  const auto& tree = model.tree();
  const std::size_t nodes = tree.node_count();
  std::vector<double> log_w(nodes), z(nodes, detail::kNegInf);
  for (Index id = 0; id < nodes; ++id) {
    double acc = detail::kNegInf;
    if (!tree.is_leaf(id)) {
      const Index l = tree.left(id), r = tree.right(id);
      z[id] = (double(tree.count(l)) * log_w[l] + double(tree.count(r)) * log_w[r]) / double(tree.count(id));
      acc = z[id];
    }
    for (Index bid : model.marks(id)) {
      const auto& blk = model.block(bid);
      acc = detail::log_add(acc, std::log(double(tree.count(blk.b))) + blk.g);
    }
    if (acc == detail::kNegInf || std::isnan(acc)) detail::fail("optimize_q: invalid partition (node ", id, " has no mass)");
    log_w[id] = acc;
  }
  std::vector<double> log_mu(nodes, 0.0);
  for (Index id = static_cast<Index>(nodes); id-- > 0;) {
    const double mu = log_mu[id];
    for (Index bid : model.marks(id)) {
      auto& blk = model.block(bid);
      blk.q = std::exp(mu + blk.g - log_w[id]);
    }
    if (!tree.is_leaf(id)) {
      const double child = mu + z[id] - log_w[id];
      log_mu[tree.left(id)] = child;
      log_mu[tree.right(id)] = child;
    }
  }
  model.mark_q_ready(true);
  const double ell = lower_bound(model);
  model.set_ell(ell);
  return ell;
}

namespace detail {

inline double centered_pair_sum(const RowMatrix& pts) {
  const Eigen::RowVectorXd mean = pts.colwise().mean();
  double scatter = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) scatter += (pts.row(i) - mean).squaredNorm();
  return 2.0 * double(pts.rows()) * scatter;  // sum over i,j of |x_i - x_j|^2
}

inline double sigma_from_pair_sum(double pair_sum, std::size_t n, std::size_t d) {
  if (!(pair_sum > 0.0)) fail("degenerate dataset: zero diameter");
  return std::sqrt(pair_sum / double(d)) / double(n);
}

}  // namespace detail

/// Bandwidth maximising the Jensen bound on log p(D):
/// sigma = (1/N) sqrt(sum_{i != j} |x_i - x_j|^2 / d), in O(Nd).
inline double sigma_init(const Dataset& ds) {
  return detail::sigma_from_pair_sum(detail::centered_pair_sum(ds.points), ds.n(), ds.dim());
}

inline double sigma_init(const PartitionTree& tree) {
  const double pair_sum = 2.0 * double(tree.n()) * tree.node(tree.root()).scatter;
  return detail::sigma_from_pair_sum(pair_sum, tree.n(), tree.dim());
}

/// Closed-form maximiser of l(D) in sigma for fixed q:
/// sigma = sqrt(sum q_AB D^2_AB / (N d)). Applies it to the model and
/// refreshes the cached bound.
inline double sigma_update(BlockModel& model) {
  if (!model.has_q()) detail::fail("sigma_update: q not optimized");
  double acc = 0.0;
  for (const auto& blk : model.blocks()) acc += blk.q * blk.d2;
  if (!(acc > 0.0)) detail::fail("degenerate bandwidth");
  const double sigma = std::sqrt(acc / (double(model.tree().n()) * double(model.tree().dim())));
  model.set_sigma(sigma);
  model.set_ell(lower_bound(model));
  return sigma;
}

struct FitOptions {
  std::optional<double> sigma0;  // default: sigma_init
  double tol = 1e-6;
  std::size_t max_iters = 50;
};

struct FitResult {
  std::vector<double> history;  // l(D) after every half-step
  std::size_t iterations = 0;
  bool converged = false;
};

/// Alternates optimize_q and sigma_update on an existing partition until the
/// relative change |dl| / (1 + |l|) over one iteration drops below tol.
inline FitResult fit(BlockModel& model, const FitOptions& opts = {}) {
  FitResult res;
  model.set_sigma(opts.sigma0 ? *opts.sigma0 : sigma_init(model.tree()));
  double prev = optimize_q(model);
  res.history.push_back(prev);
  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    sigma_update(model);
    res.history.push_back(model.ell());
    const double ell = optimize_q(model);
    res.history.push_back(ell);
    res.iterations = it;
    if (std::abs(ell - prev) / (1.0 + std::abs(ell)) < opts.tol) {
      res.converged = true;
      break;
    }
    prev = ell;
  }
  return res;
}

/// Coarsest partition fitted from scratch.
inline BlockModel fit(std::shared_ptr<const PartitionTree> tree, const FitOptions& opts = {},
                      FitResult* result = nullptr) {
  auto model = coarsest_partition(std::move(tree));
  auto res = fit(model, opts);
  if (result) *result = std::move(res);
  return model;
}

}  // namespace vdt
