#pragma once

// Greedy block refinement driven by the closed-form horizontal gain.

#include "vdt/block_model.hpp"

#include <functional>
#include <queue>
#include <unordered_map>

namespace vdt {

namespace detail {

struct SplitWeights {
  Index left, right;
  double log_left, log_right;  // log|B_t| + G_AB_t
  double log_sum;              // log sum_t |B_t| exp(G_AB_t)
};

inline SplitWeights split_weights(const BlockModel& model, const Block& blk) {
  const auto& tree = model.tree();
  if (tree.is_leaf(blk.b)) fail("horizontal split: kernel node ", blk.b, " is a leaf");
  SplitWeights w{};
  w.left = tree.left(blk.b);
  w.right = tree.right(blk.b);
  const double na = tree.count(blk.a), s = model.sigma();
  auto lw = [&](Index b) {
    const double nb = tree.count(b);
    return std::log(nb) - block_distance(tree, blk.a, b) / (2.0 * s * s * na * nb);
  };
  w.log_left = lw(w.left);
  w.log_right = lw(w.right);
  w.log_sum = log_add(w.log_left, w.log_right);
  return w;
}

}  // namespace detail

/// Lower bound on the l(D) gain of splitting (A, B) into (A, B_l), (A, B_r):
///   |A||B| q_AB log( sum_t |B_t| e^{G_AB_t} / (|B| e^{G_AB}) ).
/// Non-negative by Jensen; rounding noise is clamped to zero.
inline double gain_horizontal(const BlockModel& model, Index id) {
  if (!model.has_q()) detail::fail("gain_horizontal: q not optimized");
  const auto& blk = model.block(id);
  const auto w = detail::split_weights(model, blk);
  const auto& tree = model.tree();
  const double nb = tree.count(blk.b);
  const double gain = double(tree.count(blk.a)) * nb * blk.q * (w.log_sum - std::log(nb) - blk.g);
  return gain > 0.0 ? gain : 0.0;
}

struct LocalSplit {
  Index left_id;   // (A, B_l), reuses the parent block id
  Index right_id;  // (A, B_r)
  double gain;
};

/// Splits (A, B) horizontally and sets the children's q to the local optimum
/// that keeps |B_l| q_l + |B_r| q_r = |B| q_AB. Other blocks are untouched,
/// so rows stay stochastic. The cached l(D) grows by the returned gain.
inline LocalSplit split_local(BlockModel& model, Index id) {
  const double gain = gain_horizontal(model, id);
  const Block parent = model.block(id);
  const auto w = detail::split_weights(model, parent);
  const double nb = model.tree().count(parent.b);
  const double log_mass = std::log(nb) + std::log(parent.q) - w.log_sum;
  const Index right = model.split_kernel_side(id);
  if (parent.q > 0.0) {
    model.block(id).q = std::exp(log_mass + w.log_left - std::log(double(model.tree().count(w.left))));
    model.block(right).q = std::exp(log_mass + w.log_right - std::log(double(model.tree().count(w.right))));
  } else {
    model.block(id).q = 0.0;
    model.block(right).q = 0.0;
  }
  model.set_ell(model.ell() + gain);
  return {id, right, gain};
}

struct SplitEvent {
  Index block;          // id of the block that was split
  bool symmetric;       // true for the mirror split (B, A)
  double gain;          // horizontal gain bound
  double ell_before;    // cached l(D) before the local split
  const BlockModel* model;
};

struct RefineOptions {
  std::size_t blocks_max = 0;
  std::size_t batch = 0;  // splits between global re-optimisations; 0 means N/2
  bool learn_sigma = true;
  std::function<void(const SplitEvent&)> on_split;
};

struct RefineResult {
  std::size_t splits = 0;        // popped blocks that were refined
  std::size_t local_splits = 0;  // including symmetric counterparts
  bool exhausted = false;        // queue ran dry before blocks_max
  std::vector<double> trajectory;  // l(D) at start and after every batch
};

namespace detail {

inline std::uint64_t block_key(Index a, Index b) { return (std::uint64_t(a) << 32) | b; }

struct QueueEntry {
  double gain;
  Index id;
  std::uint32_t version;
  bool operator<(const QueueEntry& o) const {  // max-heap: larger gain, then smaller id
    return gain < o.gain || (gain == o.gain && id > o.id);
  }
};

}  // namespace detail

/// Grows the partition toward blocks_max. Repeatedly pops the block with the
/// largest horizontal gain, splits it and, when its mirror (B, A) is present
/// and A has children, the mirror too. Every `batch` pops (and at the end)
/// q is re-optimised and, with learn_sigma, sigma is updated and q
/// re-optimised again. l(D) never decreases.
inline RefineResult refine(BlockModel& model, const RefineOptions& opts) {
  if (!model.has_q()) detail::fail("refine: q not optimized");
  const auto& tree = model.tree();
  RefineResult res;
  res.trajectory.push_back(model.ell());
  if (model.block_count() >= opts.blocks_max) return res;
  const std::size_t batch = opts.batch ? opts.batch : std::max<std::size_t>(1, tree.n() / 2);

  std::unordered_map<std::uint64_t, Index> index;
  index.reserve(opts.blocks_max + 4);
  for (Index id = 0; id < model.block_count(); ++id) index[detail::block_key(model.block(id).a, model.block(id).b)] = id;

  std::vector<detail::QueueEntry> heap_storage;
  std::priority_queue<detail::QueueEntry> queue;
  auto push = [&](Index id) {
    const auto& blk = model.block(id);
    if (!tree.is_leaf(blk.b)) queue.push({gain_horizontal(model, id), id, blk.version});
  };
  auto rebuild = [&] {
    heap_storage.clear();
    heap_storage.reserve(model.block_count());
    for (Index id = 0; id < model.block_count(); ++id) {
      const auto& blk = model.block(id);
      if (!tree.is_leaf(blk.b)) heap_storage.push_back({gain_horizontal(model, id), id, blk.version});
    }
    queue = std::priority_queue<detail::QueueEntry>(std::less<detail::QueueEntry>{}, std::move(heap_storage));
    heap_storage = {};
  };
  auto split = [&](Index id, bool symmetric) {
    const Block before = model.block(id);
    const double ell_before = model.ell();
    index.erase(detail::block_key(before.a, before.b));
    const auto s = split_local(model, id);
    index[detail::block_key(model.block(s.left_id).a, model.block(s.left_id).b)] = s.left_id;
    index[detail::block_key(model.block(s.right_id).a, model.block(s.right_id).b)] = s.right_id;
    ++res.local_splits;
    if (opts.on_split) opts.on_split({id, symmetric, s.gain, ell_before, &model});
    push(s.left_id);
    push(s.right_id);
  };
  auto reoptimize = [&] {
    optimize_q(model);
    if (opts.learn_sigma) {
      sigma_update(model);
      optimize_q(model);
    }
    res.trajectory.push_back(model.ell());
  };

  rebuild();
  std::size_t since_batch = 0;
  while (model.block_count() < opts.blocks_max) {
    while (!queue.empty() && queue.top().version != model.block(queue.top().id).version) queue.pop();
    if (queue.empty()) {
      res.exhausted = true;
      break;
    }
    const Index id = queue.top().id;
    queue.pop();
    const Index a = model.block(id).a, b = model.block(id).b;
    split(id, false);
    if (!tree.is_leaf(a)) {
      auto mirror = index.find(detail::block_key(b, a));
      if (mirror != index.end()) split(mirror->second, true);
    }
    ++res.splits;
    if (++since_batch >= batch) {
      reoptimize();
      rebuild();
      since_batch = 0;
    }
  }
  if (since_batch > 0) reoptimize();
  return res;
}

}  // namespace vdt
