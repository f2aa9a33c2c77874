#pragma once

// Shared binary partition tree over the data points (anchors hierarchy) with
// per-node sufficient statistics.
//
// Node numbering: leaves are 0..N-1 and their id equals their position in
// the leaf permutation; internal nodes are N..2N-2 in post-order, so every
// child id is smaller than its parent id and the root is 2N-2.

#include "vdt/common.hpp"
#include "vdt/dataset.hpp"

#include <numeric>
#include <vector>

namespace vdt {

struct TreeNode {
  Index parent = kNone;
  Index left = kNone;
  Index right = kNone;
  Index count = 0;  // |A|
  Index lo = 0;     // leaf span [lo, hi) in perm
  Index hi = 0;
  double s2 = 0.0;       // sum of x^T x
  double scatter = 0.0;  // sum of |x - mean|^2, kept for cancellation-free distances
};

class PartitionTree {
public:
  PartitionTree() = default;

  std::size_t n() const { return perm_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(s1_.cols()); }
  std::size_t node_count() const { return nodes_.size(); }
  Index root() const { return static_cast<Index>(nodes_.size() - 1); }

  const TreeNode& node(Index id) const { return nodes_[id]; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  bool is_leaf(Index id) const { return nodes_[id].left == kNone; }
  Index count(Index id) const { return nodes_[id].count; }
  Index left(Index id) const { return nodes_[id].left; }
  Index right(Index id) const { return nodes_[id].right; }
  Index parent(Index id) const { return nodes_[id].parent; }

  Index sibling(Index id) const {
    const Index p = nodes_[id].parent;
    if (p == kNone) detail::fail("root has no sibling");
    return nodes_[p].left == id ? nodes_[p].right : nodes_[p].left;
  }

  /// S1(A) = sum of the points under A.
  auto s1(Index id) const { return s1_.row(id); }
  double s2(Index id) const { return nodes_[id].s2; }
  auto centroid(Index id) const { return s1_.row(id) / static_cast<double>(nodes_[id].count); }

  /// Leaf position -> original dataset index.
  const std::vector<Index>& perm() const { return perm_; }

  /// Leaf point in perm order (a leaf's S1 is the point itself).
  auto leaf_point(Index pos) const { return s1_.row(pos); }

  bool overlaps(Index a, Index b) const {
    return nodes_[a].lo < nodes_[b].hi && nodes_[b].lo < nodes_[a].hi;
  }
  bool contains(Index ancestor, Index id) const {
    return nodes_[ancestor].lo <= nodes_[id].lo && nodes_[id].hi <= nodes_[ancestor].hi;
  }

  /// Checks structure and statistics; throws vdt::Error on the first violation.
  void validate() const;

  /// Builds a tree from raw parts (used by the model loader).
  static PartitionTree from_parts(std::vector<TreeNode> nodes, RowMatrix s1, std::vector<Index> perm);

private:
  friend PartitionTree build_tree(const Dataset& ds);

  std::vector<TreeNode> nodes_;
  RowMatrix s1_;  // one row per node
  std::vector<Index> perm_;

  void compute_spans_and_stats();
};

namespace detail {

inline double sq_dist(const RowMatrix& pts, Index i, Index j) {
  return (pts.row(i) - pts.row(j)).squaredNorm();
}

/// Anchors hierarchy construction. A cell of M > 2 points gets ceil(sqrt M)
/// anchors: the first is the point farthest from the centroid, each further
/// one is the point farthest from its nearest anchor. Owned points are kept
/// sorted by decreasing distance so a new anchor only inspects points whose
/// distance to their anchor is at least half the anchor-to-anchor distance.
/// Cells are built recursively and then merged agglomeratively (closest
/// centroids first) into a binary tree. All ties go to the lowest original
/// index.
class AnchorBuilder {
public:
  struct Tmp {
    int left = -1, right = -1;
    Index point = kNone;
  };

  explicit AnchorBuilder(const RowMatrix& pts) : pts_(pts) {}

  int build(std::vector<Index> cell) {
    if (cell.size() == 1) return leaf(cell[0]);
    if (cell.size() == 2) {
      std::sort(cell.begin(), cell.end());
      return join(leaf(cell[0]), leaf(cell[1]));
    }
    auto cells = anchor_cells(cell);
    std::vector<Cluster> clusters;
    clusters.reserve(cells.size());
    for (auto& c : cells) {
      Cluster cl;
      cl.count = c.size();
      cl.sum = Eigen::RowVectorXd::Zero(pts_.cols());
      for (Index p : c) cl.sum += pts_.row(p);
      cl.node = build(std::move(c));
      clusters.push_back(std::move(cl));
    }
    return merge(std::move(clusters));
  }

  std::vector<Tmp> take() { return std::move(tmp_); }

private:
  struct Owned {
    double dist;
    Index point;
  };
  struct Anchor {
    Index point;
    std::vector<Owned> owned;  // decreasing dist, then increasing index
  };
  struct Cluster {
    std::size_t count = 0;
    Eigen::RowVectorXd sum;
    int node = -1;
  };

  const RowMatrix& pts_;
  std::vector<Tmp> tmp_;

  int leaf(Index p) {
    tmp_.push_back({-1, -1, p});
    return static_cast<int>(tmp_.size() - 1);
  }
  int join(int l, int r) {
    tmp_.push_back({l, r, kNone});
    return static_cast<int>(tmp_.size() - 1);
  }

  static bool farther(const Owned& a, const Owned& b) {
    return a.dist > b.dist || (a.dist == b.dist && a.point < b.point);
  }

  std::vector<std::vector<Index>> anchor_cells(const std::vector<Index>& cell) {
    const std::size_t m = cell.size();
    const auto k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));

    Eigen::RowVectorXd center = Eigen::RowVectorXd::Zero(pts_.cols());
    for (Index p : cell) center += pts_.row(p);
    center /= static_cast<double>(m);
    Index first = cell[0];
    double best = -1.0;
    for (Index p : cell) {
      double dd = (pts_.row(p) - center).squaredNorm();
      if (dd > best || (dd == best && p < first)) best = dd, first = p;
    }

    std::vector<Anchor> anchors;
    anchors.push_back({first, {}});
    anchors[0].owned.reserve(m - 1);
    for (Index p : cell)
      if (p != first) anchors[0].owned.push_back({std::sqrt(sq_dist(pts_, p, first)), p});
    std::sort(anchors[0].owned.begin(), anchors[0].owned.end(), farther);

    std::vector<Owned> keep;
    while (anchors.size() < k) {
      // Next anchor: the owned point farthest from its anchor.
      constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
      std::size_t from = npos;
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        if (anchors[a].owned.empty()) continue;
        if (from == npos || farther(anchors[a].owned.front(), anchors[from].owned.front())) from = a;
      }
      if (from == npos) break;
      const Index fresh = anchors[from].owned.front().point;
      anchors[from].owned.erase(anchors[from].owned.begin());

      Anchor next{fresh, {}};
      for (auto& anchor : anchors) {
        const double half = 0.5 * std::sqrt(sq_dist(pts_, anchor.point, fresh));
        auto& owned = anchor.owned;
        keep.clear();
        std::size_t scanned = 0;
        for (; scanned < owned.size() && owned[scanned].dist >= half; ++scanned) {
          const Owned& o = owned[scanned];
          const double dn = std::sqrt(sq_dist(pts_, o.point, fresh));
          if (dn < o.dist || (dn == o.dist && fresh < anchor.point))
            next.owned.push_back({dn, o.point});
          else
            keep.push_back(o);
        }
        if (keep.size() != scanned) {
          std::copy(keep.begin(), keep.end(), owned.begin());
          owned.erase(owned.begin() + static_cast<std::ptrdiff_t>(keep.size()),
                      owned.begin() + static_cast<std::ptrdiff_t>(scanned));
        }
      }
      std::sort(next.owned.begin(), next.owned.end(), farther);
      anchors.push_back(std::move(next));
    }

    std::vector<std::vector<Index>> cells;
    cells.reserve(anchors.size());
    for (auto& a : anchors) {
      std::vector<Index> c;
      c.reserve(a.owned.size() + 1);
      c.push_back(a.point);
      for (const auto& o : a.owned) c.push_back(o.point);
      cells.push_back(std::move(c));
    }
    return cells;
  }

  int merge(std::vector<Cluster> clusters) {
    const std::size_t k = clusters.size();
    auto centroid_dist = [&](std::size_t a, std::size_t b) {
      return (clusters[a].sum / double(clusters[a].count) - clusters[b].sum / double(clusters[b].count))
          .squaredNorm();
    };
    std::vector<double> dist(k * k, 0.0);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) dist[a * k + b] = dist[b * k + a] = centroid_dist(a, b);
    std::vector<bool> alive(k, true);
    for (std::size_t remaining = k; remaining > 1; --remaining) {
      std::size_t ba = 0, bb = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < k; ++a) {
        if (!alive[a]) continue;
        for (std::size_t b = a + 1; b < k; ++b)
          if (alive[b] && dist[a * k + b] < best) best = dist[a * k + b], ba = a, bb = b;
      }
      clusters[ba].node = join(clusters[ba].node, clusters[bb].node);
      clusters[ba].count += clusters[bb].count;
      clusters[ba].sum += clusters[bb].sum;
      alive[bb] = false;
      for (std::size_t c = 0; c < k; ++c)
        if (alive[c] && c != ba) dist[ba * k + c] = dist[c * k + ba] = centroid_dist(ba, c);
    }
    for (std::size_t a = 0; a < k; ++a)
      if (alive[a]) return clusters[a].node;
    return -1;
  }
};

}  // namespace detail

/// Builds the anchors-hierarchy partition tree and its statistics.
inline PartitionTree build_tree(const Dataset& ds) {
  ds.validate();
  const std::size_t n = ds.n();
  detail::AnchorBuilder builder(ds.points);
  std::vector<Index> all(n);
  std::iota(all.begin(), all.end(), Index{0});
  const int root_tmp = builder.build(std::move(all));
  const auto tmp = builder.take();

  PartitionTree tree;
  tree.nodes_.resize(2 * n - 1);
  tree.perm_.reserve(n);
  Index next_internal = static_cast<Index>(n);

  // Iterative post-order walk: leaves numbered by in-order position,
  // internal nodes as they are finished.
  struct Frame {
    int tmp;
    Index left = kNone;
    int state = 0;
  };
  std::vector<Frame> stack{{root_tmp}};
  Index last = kNone;
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& t = tmp[static_cast<std::size_t>(f.tmp)];
    if (t.left < 0) {
      const auto id = static_cast<Index>(tree.perm_.size());
      tree.perm_.push_back(t.point);
      last = id;
      stack.pop_back();
      continue;
    }
    if (f.state == 0) {
      f.state = 1;
      stack.push_back({t.left});
    } else if (f.state == 1) {
      f.left = last;
      f.state = 2;
      stack.push_back({t.right});
    } else {
      const Index id = next_internal++;
      auto& node = tree.nodes_[id];
      node.left = f.left;
      node.right = last;
      tree.nodes_[f.left].parent = id;
      tree.nodes_[last].parent = id;
      last = id;
      stack.pop_back();
    }
  }

  tree.s1_.resize(static_cast<Eigen::Index>(2 * n - 1), ds.points.cols());
  for (std::size_t pos = 0; pos < n; ++pos) tree.s1_.row(Eigen::Index(pos)) = ds.points.row(tree.perm_[pos]);
  tree.compute_spans_and_stats();
  return tree;
}

inline void PartitionTree::compute_spans_and_stats() {
  const auto n = static_cast<Index>(perm_.size());
  for (Index id = 0; id < nodes_.size(); ++id) {
    auto& node = nodes_[id];
    if (id < n) {
      node.count = 1;
      node.lo = id;
      node.hi = id + 1;
      node.s2 = s1_.row(id).squaredNorm();
      node.scatter = 0.0;
      continue;
    }
    const auto& l = nodes_[node.left];
    const auto& r = nodes_[node.right];
    node.count = l.count + r.count;
    node.lo = std::min(l.lo, r.lo);
    node.hi = std::max(l.hi, r.hi);
    s1_.row(id) = s1_.row(node.left) + s1_.row(node.right);
    node.s2 = l.s2 + r.s2;
    const double between = (centroid(node.left) - centroid(node.right)).squaredNorm();
    node.scatter = l.scatter + r.scatter + double(l.count) * double(r.count) / double(node.count) * between;
  }
}

inline PartitionTree PartitionTree::from_parts(std::vector<TreeNode> nodes, RowMatrix s1, std::vector<Index> perm) {
  PartitionTree t;
  t.nodes_ = std::move(nodes);
  t.s1_ = std::move(s1);
  t.perm_ = std::move(perm);
  t.validate();
  return t;
}

inline void PartitionTree::validate() const {
  const std::size_t n = perm_.size();
  if (n < 2) detail::fail("tree: needs at least 2 leaves");
  if (nodes_.size() != 2 * n - 1) detail::fail("tree: expected ", 2 * n - 1, " nodes, got ", nodes_.size());
  if (static_cast<std::size_t>(s1_.rows()) != nodes_.size()) detail::fail("tree: statistics size mismatch");
  std::vector<bool> seen(n, false);
  for (Index p : perm_) {
    if (p >= n || seen[p]) detail::fail("tree: perm is not a permutation");
    seen[p] = true;
  }
  if (nodes_.back().parent != kNone) detail::fail("tree: root has a parent");
  for (Index id = 0; id < nodes_.size(); ++id) {
    const auto& node = nodes_[id];
    if (id != root() && (node.parent == kNone || node.parent <= id || node.parent > root()))
      detail::fail("tree: bad parent of node ", id);
    if (id < n) {
      if (node.left != kNone || node.right != kNone) detail::fail("tree: leaf ", id, " has children");
      if (node.count != 1 || node.lo != id || node.hi != id + 1) detail::fail("tree: bad leaf ", id);
      continue;
    }
    if (node.left == kNone || node.right == kNone || node.left >= id || node.right >= id)
      detail::fail("tree: bad children of node ", id);
    const auto& l = nodes_[node.left];
    const auto& r = nodes_[node.right];
    if (l.parent != id || r.parent != id) detail::fail("tree: child/parent mismatch at ", id);
    if (node.count != l.count + r.count) detail::fail("tree: count mismatch at ", id);
    if (l.hi != r.lo || node.lo != l.lo || node.hi != r.hi) detail::fail("tree: non-contiguous span at ", id);
    if (node.hi - node.lo != node.count) detail::fail("tree: span/count mismatch at ", id);
  }
  if (nodes_.back().lo != 0 || nodes_.back().hi != n) detail::fail("tree: root does not span all leaves");
}

/// D^2_AB = sum over x in A, m in B of |x - m|^2 for disjoint subtrees A, B.
/// Evaluated from node statistics in O(d) through
///   |A||B| |mean_A - mean_B|^2 + |B| scatter_A + |A| scatter_B,
/// which equals |A|S2(B) + |B|S2(A) - 2 S1(A).S1(B) without its cancellation.
inline double block_distance(const PartitionTree& tree, Index a, Index b) {
  if (tree.overlaps(a, b)) detail::fail("block_distance: nodes ", a, " and ", b, " overlap");
  const double na = tree.count(a), nb = tree.count(b);
  const double between = (tree.s1(a) / na - tree.s1(b) / nb).squaredNorm();
  return na * nb * between + nb * tree.node(a).scatter + na * tree.node(b).scatter;
}

/// G_AB = -D^2_AB / (2 sigma^2 |A||B|), the block's log-weight.
inline double log_block_weight(const PartitionTree& tree, Index a, Index b, double sigma) {
  if (!(sigma > 0.0)) detail::fail("log_block_weight: sigma must be positive, got ", sigma);
  const double d2 = block_distance(tree, a, b);
  return -d2 / (2.0 * sigma * sigma * double(tree.count(a)) * double(tree.count(b)));
}

}  // namespace vdt
