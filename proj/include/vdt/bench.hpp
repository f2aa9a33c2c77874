#pragma once

// Experiment runners for the variational model and its baselines, and the
// CSV report they produce.

#include "vdt/baselines.hpp"
#include "vdt/block_model.hpp"
#include "vdt/inference.hpp"
#include "vdt/refinement.hpp"

#include <chrono>
#include <future>
#include <map>
#include <optional>
#include <ostream>

namespace vdt {

using Millis = std::chrono::duration<double, std::milli>;

template <typename F>
double time_ms(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return Millis(std::chrono::steady_clock::now() - start).count();
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct BenchRow {
  std::string method;  // exact | vdt | knn
  std::size_t n = 0;
  std::size_t level = 0;    // refinement level k (|B| = kN, k neighbours); 0 for none
  std::size_t labeled = 0;  // labeled-set size used for ccr
  double param = 0;         // k for knn, |B| for vdt, N(N-1) for exact
  std::optional<double> ccr, ell, sigma;
  std::string status = "ok";
  std::optional<double> build_ms, matvec_ms, propagate_ms, refine_ms;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  bool timings_reliable = true;

  static constexpr const char* kHeader =
      "method,n,level,labeled,param,ccr,ell,sigma,status,build_ms,matvec_ms,propagate_ms,refine_ms,timing";

  void write_csv(std::ostream& out) const {
    auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
    auto ms = [](const std::optional<double>& v) {
      if (!v) return std::string();
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", *v);
      return std::string(buf);
    };
    out << kHeader << '\n';
    for (const auto& r : rows)
      out << r.method << ',' << r.n << ',' << r.level << ',' << r.labeled << ',' << detail::format_double(r.param) << ','
          << opt(r.ccr) << ',' << opt(r.ell) << ',' << opt(r.sigma) << ',' << r.status << ',' << ms(r.build_ms) << ','
          << ms(r.matvec_ms) << ',' << ms(r.propagate_ms) << ',' << ms(r.refine_ms) << ','
          << (timings_reliable ? "reliable" : "unreliable") << '\n';
  }

  /// First row matching the key; `labeled` is ignored when unset.
  const BenchRow* find(const std::string& method, std::size_t n, std::size_t level = 0,
                       std::optional<std::size_t> labeled = std::nullopt) const {
    for (const auto& r : rows)
      if (r.method == method && r.n == n && r.level == level && (!labeled || r.labeled == *labeled)) return &r;
    return nullptr;
  }
};

struct SslOptions {
  double alpha = 0.01;
  std::size_t iters = 500;
};

/// Propagates from `split` and scores the held-out labeled points.
template <typename Transition>
double ssl_ccr(const Transition& p, const Dataset& ds, const LabelSplit& split, const SslOptions& ssl,
               double* elapsed_ms = nullptr) {
  const auto y0 = initial_labels(ds.n(), ds.classes, ds.labels, split.labeled_indices);
  LabelMatrix y;
  const double t = time_ms([&] { y = label_propagate(p, y0, ssl.alpha, ssl.iters); });
  if (elapsed_ms) *elapsed_ms = t;
  return predict_and_ccr(y, ds.labels, held_out(ds.labels, split.labeled_indices));
}

struct ScalingOptions {
  std::vector<std::size_t> sizes{1000, 2000, 4000};
  std::uint64_t seed = 1;
  std::size_t seeds = 5;
  std::size_t repeats = 3;
  std::size_t matvec_reps = 10;
  std::size_t dim = 2;
  SyntheticKind kind = SyntheticKind::two_gaussians;
  std::size_t exact_cap = 8192;
  std::size_t k = 2;
  double fraction = 0.1;
  bool ccr = true;
  bool parallel = false;
  SslOptions ssl;
};

namespace detail {

struct CellSample {
  std::vector<double> build, matvec, propagate;
  double ccr = 0, ell = 0, sigma = 0, param = 0;
};

inline CellSample scaling_cell(const std::string& method, std::size_t n, std::uint64_t seed, const ScalingOptions& o) {
  const Dataset ds = make_synthetic(o.kind, n, o.dim, seed);
  CellSample s;
  RowMatrix y = RowMatrix::Zero(Eigen::Index(n), 1);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, 0) = u(rng);

  auto time_products = [&](const auto& p) {
    RowMatrix out;
    for (std::size_t r = 0; r < o.repeats; ++r)
      s.matvec.push_back(time_ms([&] {
                           for (std::size_t t = 0; t < o.matvec_reps; ++t) out = multiply(p, y);
                         }) /
                         double(o.matvec_reps));
  };
  auto score = [&](const auto& p) {
    if (!o.ccr || !ds.has_labels()) return;
    double t = 0;
    s.ccr = ssl_ccr(p, ds, make_split(ds, o.fraction, seed), o.ssl, &t);
    s.propagate.push_back(t);
  };

  if (method == "exact") {
    DenseTransition p;
    for (std::size_t r = 0; r < o.repeats; ++r) {
      p = {};
      s.build.push_back(time_ms([&] { p = exact_transition(ds, sigma_init(ds), o.exact_cap); }));
    }
    s.sigma = p.sigma;
    s.param = double(n) * double(n - 1);
    time_products(p);
    score(p);
  } else if (method == "vdt") {
    BlockModel model;
    for (std::size_t r = 0; r < o.repeats; ++r)
      s.build.push_back(time_ms([&] {
        auto tree = std::make_shared<const PartitionTree>(build_tree(ds));
        model = fit(tree);
      }));
    s.sigma = model.sigma();
    s.ell = model.ell();
    s.param = double(model.block_count());
    time_products(model);
    score(model);
  } else {
    SparseKnnTransition p;
    for (std::size_t r = 0; r < o.repeats; ++r)
      s.build.push_back(time_ms([&] {
        const PartitionTree tree = build_tree(ds);
        p = knn_build(ds, tree, o.k, sigma_init(ds));
      }));
    s.sigma = p.sigma;
    s.param = double(o.k);
    time_products(p);
    score(p);
  }
  return s;
}

}  // namespace detail

/// Build time, single-product time and CCR for the exact, coarsest
/// variational and kNN (k = o.k) models over a range of sizes. Each row
/// aggregates o.seeds datasets: timings are medians over all repeats, CCR
/// and sigma are means. Exact rows above exact_cap are marked skipped.
inline BenchReport run_scaling_suite(const ScalingOptions& o) {
  BenchReport report;
  report.timings_reliable = !o.parallel;
  const std::vector<std::string> methods{"exact", "vdt", "knn"};
  struct Cell {
    std::string method;
    std::size_t n;
    std::vector<std::future<detail::CellSample>> samples;
  };
  std::vector<Cell> cells;
  for (std::size_t n : o.sizes) {
    for (const auto& m : methods) {
      Cell cell{m, n, {}};
      if (m == "exact" && n > o.exact_cap) {
        cells.push_back(std::move(cell));
        continue;
      }
      for (std::size_t s = 0; s < o.seeds; ++s) {
        const auto policy = o.parallel ? std::launch::async : std::launch::deferred;
        cell.samples.push_back(std::async(policy, detail::scaling_cell, m, n, o.seed + s, std::cref(o)));
      }
      cells.push_back(std::move(cell));
    }
  }
  for (auto& cell : cells) {
    BenchRow row;
    row.method = cell.method;
    row.n = cell.n;
    if (cell.samples.empty()) {
      row.status = "skipped";
      report.rows.push_back(row);
      continue;
    }
    std::vector<double> build, matvec, propagate;
    double ccr = 0, ell = 0, sigma = 0;
    for (auto& f : cell.samples) {
      auto s = f.get();
      build.insert(build.end(), s.build.begin(), s.build.end());
      matvec.insert(matvec.end(), s.matvec.begin(), s.matvec.end());
      propagate.insert(propagate.end(), s.propagate.begin(), s.propagate.end());
      ccr += s.ccr;
      ell += s.ell;
      sigma += s.sigma;
      row.param = s.param;
    }
    const double k = double(cell.samples.size());
    row.build_ms = median(build);
    row.matvec_ms = median(matvec);
    row.sigma = sigma / k;
    if (cell.method == "vdt") row.ell = ell / k;
    if (!propagate.empty()) {
      row.propagate_ms = median(propagate);
      row.ccr = ccr / k;
      row.labeled = static_cast<std::size_t>(std::llround(o.fraction * double(cell.n)));
    }
    report.rows.push_back(row);
  }
  return report;
}

struct RefinementOptions {
  std::vector<std::size_t> levels;  // empty: 2..ceil(log2 N)
  std::vector<std::size_t> labeled_sizes{10, 100};
  std::uint64_t seed = 1;
  std::size_t seeds = 5;
  std::size_t exact_cap = 8192;
  SslOptions ssl;
};

/// Starts from the coarsest variational model and the k = 2 kNN graph and
/// refines both level by level so that |B| = kN matches k neighbours. Each
/// (method, level, labeled size) row carries the refinement time of that
/// level and the CCR averaged over o.seeds random labeled sets. Exact-model
/// rows (level 0) give the reference CCR.
inline BenchReport run_refinement_suite(const Dataset& ds, const RefinementOptions& o) {
  if (!ds.has_labels()) detail::fail("refinement suite: dataset has no labels");
  const std::size_t n = ds.n();
  std::vector<std::size_t> levels = o.levels;
  if (levels.empty())
    for (std::size_t k = 2; k <= static_cast<std::size_t>(std::ceil(std::log2(double(n)))); ++k) levels.push_back(k);

  std::vector<std::vector<LabelSplit>> splits;
  for (std::size_t size : o.labeled_sizes) {
    std::vector<LabelSplit> per_seed;
    for (std::size_t s = 0; s < o.seeds; ++s) per_seed.push_back(make_split(ds, double(size) / double(n), o.seed + s));
    splits.push_back(std::move(per_seed));
  }
  auto mean_ccr = [&](const auto& p, std::size_t which, std::vector<double>& prop) {
    double acc = 0;
    for (const auto& sp : splits[which]) {
      double t = 0;
      acc += ssl_ccr(p, ds, sp, o.ssl, &t);
      prop.push_back(t);
    }
    return acc / double(splits[which].size());
  };

  BenchReport report;
  const double sigma0 = sigma_init(ds);
  if (n <= o.exact_cap) {
    DenseTransition exact;
    const double build = time_ms([&] { exact = exact_transition(ds, sigma0, o.exact_cap); });
    for (std::size_t w = 0; w < o.labeled_sizes.size(); ++w) {
      BenchRow row{"exact", n, 0, o.labeled_sizes[w], double(n) * double(n - 1)};
      std::vector<double> prop;
      row.ccr = mean_ccr(exact, w, prop);
      row.sigma = sigma0;
      row.build_ms = build;
      row.propagate_ms = median(prop);
      report.rows.push_back(row);
    }
  }

  std::shared_ptr<const PartitionTree> tree;
  BlockModel model;
  const double vdt_build = time_ms([&] {
    tree = std::make_shared<const PartitionTree>(build_tree(ds));
    model = fit(tree);
  });
  SparseKnnTransition knn;
  std::size_t knn_k = std::min<std::size_t>(2, n - 1);
  const double knn_build_ms = time_ms([&] { knn = knn_build(ds, *tree, knn_k, sigma0); });

  for (std::size_t li = 0; li < levels.size(); ++li) {
    const std::size_t k = levels[li];
    RefineOptions ro;
    ro.blocks_max = k * n;
    const double vdt_refine = time_ms([&] { refine(model, ro); });
    double knn_refine_ms = 0;
    const std::size_t target_k = std::min(k, n - 1);
    if (target_k > knn_k) {
      knn_refine_ms = time_ms([&] { knn = knn_refine(knn, ds, *tree, target_k); });
      knn_k = target_k;
    }
    for (std::size_t w = 0; w < o.labeled_sizes.size(); ++w) {
      std::vector<double> prop;
      BenchRow v{"vdt", n, k, o.labeled_sizes[w], double(model.block_count())};
      v.ccr = mean_ccr(model, w, prop);
      v.ell = model.ell();
      v.sigma = model.sigma();
      v.build_ms = vdt_build;
      v.refine_ms = vdt_refine;
      v.propagate_ms = median(prop);
      report.rows.push_back(v);

      prop.clear();
      BenchRow kn{"knn", n, k, o.labeled_sizes[w], double(knn_k)};
      kn.ccr = mean_ccr(knn, w, prop);
      kn.sigma = sigma0;
      kn.build_ms = knn_build_ms;
      kn.refine_ms = knn_refine_ms;
      kn.propagate_ms = median(prop);
      report.rows.push_back(kn);
    }
  }
  return report;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) detail::fail("loglog_slope: need at least two points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += std::log(x[i]), my += std::log(y[i]);
  mx /= double(x.size());
  my /= double(y.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace vdt
