// Command-line front end: dataset generation, model building and
// refinement, products, label propagation, evaluation and benchmarks.

#include "vdt/vdt.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace vdt;

struct Args {
  std::string input, format = "csv", output, model, sigma = "auto", labels, vector, suite = "scaling", kind = "two_gaussians",
              method = "vdt", sizes = "1000,2000,4000", levels;
  std::size_t blocks_max = 0, batch = 0, k = 2, iters = 500, n = 1000, d = 2, seeds = 5, repeats = 3;
  double alpha = 0.01, fraction = 0.1;
  std::uint64_t seed = 1;
  bool parallel = false, fixed_sigma = false;
};

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  for (auto field : detail::split(text, ',')) {
    auto v = detail::parse_double(field);
    if (!v || *v < 1 || *v != std::floor(*v)) detail::fail("bad ", what, " entry '", std::string(field), "'");
    out.push_back(static_cast<std::size_t>(*v));
  }
  if (out.empty()) detail::fail("empty ", what, " list");
  return out;
}

std::optional<double> parse_sigma(const std::string& text) {
  if (text == "auto") return std::nullopt;
  auto v = detail::parse_double(text);
  if (!v || !(*v > 0.0)) detail::fail("--sigma must be 'auto' or a positive number, got '", text, "'");
  return v;
}

Dataset load_input(const Args& a) {
  if (a.input.empty()) detail::fail("--input is required");
  Dataset ds = load_dataset(a.input, parse_format(a.format));
  if (!a.labels.empty()) attach_labels(ds, load_labels(a.labels, ds.n()));
  return ds;
}

RowMatrix load_matrix(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<double> flat;
  std::size_t rows = 0, cols = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    const auto fields = detail::split(line, ',');
    if (cols == 0) cols = fields.size();
    if (fields.size() != cols) throw ParseError("vector: ragged row", lineno);
    for (auto f : fields) {
      auto v = detail::parse_double(f);
      if (!v) throw ParseError("vector: non-numeric field", lineno);
      flat.push_back(*v);
    }
    ++rows;
  }
  if (rows == 0) detail::fail("vector file '", path, "' is empty");
  return detail::to_matrix(flat, rows, cols);
}

void write_matrix(const RowMatrix& m, std::ostream& out) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) out << (k ? "," : "") << detail::format_double(m(i, k));
    out << '\n';
  }
}

void write_predictions(const LabelMatrix& y, std::ostream& out) {
  const auto pred = predict(y);
  out << "index,class";
  for (int c = 0; c < y.classes; ++c) out << ",score_" << c;
  out << '\n';
  for (Eigen::Index i = 0; i < y.values.rows(); ++i) {
    out << i << ',' << pred[std::size_t(i)];
    for (int c = 0; c < y.classes; ++c) out << ',' << detail::format_double(y.values(i, c));
    out << '\n';
  }
}

// Writes to --output, or stdout when it is empty.
template <typename F>
void emit(const std::string& path, F&& write) {
  if (path.empty()) {
    write(std::cout);
  } else {
    auto out = detail::open_out(path);
    write(out);
    if (!out) detail::fail("cannot write '", path, "'");
  }
}

nlohmann::json summary(const BlockModel& m) {
  return {{"ell", m.ell()}, {"sigma", m.sigma()}, {"block_count", m.block_count()}, {"n", m.tree().n()}};
}

void maybe_refine(BlockModel& model, const Args& a) {
  if (a.blocks_max == 0) return;
  RefineOptions ro;
  ro.blocks_max = a.blocks_max;
  ro.batch = a.batch;
  ro.learn_sigma = !a.fixed_sigma;
  refine(model, ro);
}

int cmd_synth(const Args& a) {
  if (a.output.empty()) detail::fail("--output is required");
  const Dataset ds = make_synthetic(parse_synthetic_kind(a.kind), a.n, a.d, a.seed);
  save_dataset(ds, a.output, parse_format(a.format));
  if (!a.labels.empty() && ds.has_labels()) save_labels(ds.labels, a.labels);
  return 0;
}

int cmd_build(const Args& a) {
  if (a.output.empty()) detail::fail("--output is required");
  const Dataset ds = load_input(a);
  auto tree = std::make_shared<const PartitionTree>(build_tree(ds));
  FitOptions fo;
  fo.sigma0 = parse_sigma(a.sigma);
  if (a.fixed_sigma) fo.max_iters = 0;
  BlockModel model = fit(tree, fo);
  maybe_refine(model, a);
  save_model(model, a.output);
  std::cout << summary(model).dump() << '\n';
  return 0;
}

int cmd_refine(const Args& a) {
  if (a.model.empty() || a.output.empty()) detail::fail("--model and --output are required");
  if (a.blocks_max == 0) detail::fail("--blocks-max is required");
  BlockModel model = load_model(a.model);
  maybe_refine(model, a);
  save_model(model, a.output);
  std::cout << summary(model).dump() << '\n';
  return 0;
}

int cmd_matvec(const Args& a) {
  if (a.model.empty() || a.vector.empty()) detail::fail("--model and --vector are required");
  const BlockModel model = load_model(a.model);
  const RowMatrix y = matvec(model, load_matrix(a.vector));
  emit(a.output, [&](std::ostream& out) { write_matrix(y, out); });
  return 0;
}

int cmd_propagate(const Args& a) {
  if (a.model.empty() || a.labels.empty()) detail::fail("--model and --labels are required");
  const BlockModel model = load_model(a.model);
  const std::size_t n = model.tree().n();
  const auto labels = load_labels(a.labels, n);
  std::vector<Index> labeled;
  int classes = 2;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] != kUnlabeled) {
      labeled.push_back(Index(i));
      classes = std::max(classes, labels[i] + 1);
    }
  if (labeled.empty()) detail::fail("labels file has no entries");
  const auto y = label_propagate(model, initial_labels(n, classes, labels, labeled), a.alpha, a.iters);
  emit(a.output, [&](std::ostream& out) { write_predictions(y, out); });
  return 0;
}

int cmd_eval(const Args& a) {
  const Dataset ds = load_input(a);
  if (!ds.has_labels()) detail::fail("eval needs labels (--labels or a libsvm input)");
  const auto split = make_split(ds, a.fraction, a.seed);
  const SslOptions ssl{a.alpha, a.iters};
  nlohmann::json out{{"method", a.method}, {"n", ds.n()}, {"labeled", split.labeled_indices.size()}, {"seed", a.seed}};
  const auto sigma = parse_sigma(a.sigma);
  if (a.method == "vdt") {
    auto tree = std::make_shared<const PartitionTree>(build_tree(ds));
    FitOptions fo;
    fo.sigma0 = sigma;
    BlockModel model = fit(tree, fo);
    maybe_refine(model, a);
    out.update(summary(model));
    out["ccr"] = ssl_ccr(model, ds, split, ssl);
  } else if (a.method == "knn") {
    const PartitionTree tree = build_tree(ds);
    const auto p = knn_build(ds, tree, a.k, sigma ? *sigma : sigma_init(ds));
    out["k"] = a.k;
    out["sigma"] = p.sigma;
    out["ccr"] = ssl_ccr(p, ds, split, ssl);
  } else if (a.method == "exact") {
    const auto p = exact_transition(ds, sigma ? *sigma : sigma_init(ds));
    out["sigma"] = p.sigma;
    out["ccr"] = ssl_ccr(p, ds, split, ssl);
  } else {
    detail::fail("unknown method '", a.method, "' (expected vdt, knn or exact)");
  }
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_bench(const Args& a) {
  BenchReport report;
  if (a.suite == "scaling") {
    ScalingOptions o;
    o.sizes = parse_list(a.sizes, "--sizes");
    o.seed = a.seed;
    o.seeds = a.seeds;
    o.repeats = a.repeats;
    o.dim = a.d;
    o.kind = parse_synthetic_kind(a.kind);
    o.k = a.k;
    o.fraction = a.fraction;
    o.parallel = a.parallel;
    o.ssl = {a.alpha, a.iters};
    report = run_scaling_suite(o);
  } else if (a.suite == "refinement") {
    const Dataset ds = a.input.empty() ? make_synthetic(parse_synthetic_kind(a.kind), a.n, a.d, a.seed) : load_input(a);
    RefinementOptions o;
    if (!a.levels.empty()) o.levels = parse_list(a.levels, "--levels");
    o.seed = a.seed;
    o.seeds = a.seeds;
    o.ssl = {a.alpha, a.iters};
    report = run_refinement_suite(ds, o);
  } else {
    detail::fail("unknown suite '", a.suite, "' (expected scaling or refinement)");
  }
  emit(a.output, [&](std::ostream& out) { report.write_csv(out); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational dual-tree transition matrices for graph-based semi-supervised learning"};
  app.require_subcommand(1, 1);
  Args a;

  auto input = [&](CLI::App* s) {
    s->add_option("--input", a.input, "Dataset file");
    s->add_option("--format", a.format, "csv | libsvm | f32raw")->capture_default_str();
  };
  auto fitting = [&](CLI::App* s) {
    s->add_option("--sigma", a.sigma, "Initial bandwidth: auto or a positive number")->capture_default_str();
    s->add_option("--blocks-max", a.blocks_max, "Refine until this many blocks");
    s->add_option("--batch", a.batch, "Splits between global re-optimisations (0: N/2)");
    s->add_flag("--fixed-sigma", a.fixed_sigma, "Keep sigma at its initial value");
  };
  auto lp = [&](CLI::App* s) {
    s->add_option("--alpha", a.alpha, "Propagation weight")->capture_default_str();
    s->add_option("--iters", a.iters, "Propagation steps")->capture_default_str();
  };

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--kind", a.kind, "two_gaussians | uniform_cube")->capture_default_str();
  synth->add_option("--n", a.n, "Number of points")->capture_default_str();
  synth->add_option("--d", a.d, "Dimension")->capture_default_str();
  synth->add_option("--format", a.format, "csv | libsvm | f32raw")->capture_default_str();
  synth->add_option("--output", a.output, "Dataset file");
  synth->add_option("--labels", a.labels, "Also write an index,label file");
  synth->add_option("--seed", a.seed)->capture_default_str();

  auto* build = app.add_subcommand("build", "Fit a coarsest model, optionally refined");
  input(build);
  fitting(build);
  build->add_option("--labels", a.labels, "Labels file (ignored by the model)");
  build->add_option("--output", a.output, "Model file");
  build->add_option("--seed", a.seed)->capture_default_str();

  auto* ref = app.add_subcommand("refine", "Refine a saved model");
  ref->add_option("--model", a.model, "Model file");
  ref->add_option("--output", a.output, "Refined model file");
  fitting(ref);
  ref->add_option("--seed", a.seed)->capture_default_str();

  auto* mv = app.add_subcommand("matvec", "Multiply a saved model by a CSV matrix");
  mv->add_option("--model", a.model, "Model file");
  mv->add_option("--vector", a.vector, "CSV with N rows");
  mv->add_option("--output", a.output, "Result CSV (stdout if omitted)");
  mv->add_option("--seed", a.seed)->capture_default_str();

  auto* prop = app.add_subcommand("propagate", "Label Propagation with a saved model");
  prop->add_option("--model", a.model, "Model file");
  prop->add_option("--labels", a.labels, "index,label CSV of known labels");
  prop->add_option("--output", a.output, "Prediction CSV (stdout if omitted)");
  lp(prop);
  prop->add_option("--seed", a.seed)->capture_default_str();

  auto* ev = app.add_subcommand("eval", "CCR of one method on a random labeled split");
  input(ev);
  fitting(ev);
  lp(ev);
  ev->add_option("--labels", a.labels, "index,label CSV");
  ev->add_option("--method", a.method, "vdt | knn | exact")->capture_default_str();
  ev->add_option("--k", a.k, "Neighbours for knn")->capture_default_str();
  ev->add_option("--fraction", a.fraction, "Labeled fraction")->capture_default_str();
  ev->add_option("--seed", a.seed)->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Run a benchmark suite and write a CSV report");
  bench->add_option("--suite", a.suite, "scaling | refinement")->capture_default_str();
  bench->add_option("--sizes", a.sizes, "Comma-separated sizes (scaling)")->capture_default_str();
  bench->add_option("--levels", a.levels, "Comma-separated levels (refinement; default 2..ceil(log2 N))");
  input(bench);
  bench->add_option("--labels", a.labels, "index,label CSV");
  bench->add_option("--kind", a.kind, "Synthetic data kind")->capture_default_str();
  bench->add_option("--n", a.n, "Synthetic size (refinement)")->capture_default_str();
  bench->add_option("--d", a.d, "Synthetic dimension")->capture_default_str();
  bench->add_option("--k", a.k, "Neighbours for knn (scaling)")->capture_default_str();
  bench->add_option("--seeds", a.seeds, "Repetitions with consecutive seeds")->capture_default_str();
  bench->add_option("--repeats", a.repeats, "Timing repeats per cell")->capture_default_str();
  bench->add_option("--fraction", a.fraction, "Labeled fraction (scaling)")->capture_default_str();
  lp(bench);
  bench->add_flag("--parallel", a.parallel, "Run cells concurrently (timings marked unreliable)");
  bench->add_option("--output", a.output, "Report CSV (stdout if omitted)");
  bench->add_option("--seed", a.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*synth) return cmd_synth(a);
    if (*build) return cmd_build(a);
    if (*ref) return cmd_refine(a);
    if (*mv) return cmd_matvec(a);
    if (*prop) return cmd_propagate(a);
    if (*ev) return cmd_eval(a);
    if (*bench) return cmd_bench(a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
