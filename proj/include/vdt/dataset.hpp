#pragma once

// Point sets with optional class labels: file formats, label splits and
// synthetic generators.
//
// Duplicate points are allowed. A zero distance simply yields the largest
// kernel value exp(0) = 1; it is never an error.

#include "vdt/common.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace vdt {

inline constexpr int kUnlabeled = -1;

enum class Format { csv, libsvm, f32raw };

inline Format parse_format(std::string_view name) {
  if (name == "csv") return Format::csv;
  if (name == "libsvm") return Format::libsvm;
  if (name == "f32raw") return Format::f32raw;
  detail::fail("unknown dataset format '", name, "'");
}

/// N points in d dimensions, plus optional labels in 0..C-1 (kUnlabeled for
/// points without one). Immutable once validated.
struct Dataset {
  RowMatrix points;
  std::vector<int> labels;  // empty, or one entry per point
  int classes = 0;

  std::size_t n() const { return static_cast<std::size_t>(points.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points.cols()); }
  bool has_labels() const { return !labels.empty(); }
  auto row(std::size_t i) const { return points.row(static_cast<Eigen::Index>(i)); }

  /// Throws vdt::Error when an invariant does not hold.
  void validate() const {
    if (points.rows() < 2) detail::fail("dataset needs at least 2 points, got ", points.rows());
    if (points.cols() < 1) detail::fail("dataset needs at least 1 dimension");
    if (!points.allFinite()) {
      for (Eigen::Index i = 0; i < points.rows(); ++i)
        if (!points.row(i).allFinite()) detail::fail("non-finite coordinate in point ", i);
    }
    if (!labels.empty()) {
      if (labels.size() != n()) detail::fail("label count ", labels.size(), " != point count ", n());
      if (classes < 2) detail::fail("labeled dataset needs at least 2 classes, got ", classes);
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != kUnlabeled && (labels[i] < 0 || labels[i] >= classes))
          detail::fail("label ", labels[i], " of point ", i, " outside 0..", classes - 1);
    }
  }
};

/// Indices of the points whose labels are revealed to the learner.
struct LabelSplit {
  std::vector<Index> labeled_indices;  // sorted ascending
  std::uint64_t seed = 0;
  double fraction = 0.0;
};

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) fail("cannot open '", path, "'");
  return in;
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) fail("cannot write '", path, "'");
  return out;
}

inline RowMatrix to_matrix(const std::vector<double>& flat, std::size_t n, std::size_t d) {
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::copy(flat.begin(), flat.end(), m.data());
  return m;
}

/// Shortest text that reads back to the same double (17 significant digits).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Dataset load_csv(const std::string& path) {
  auto in = open_in(path);
  std::vector<double> flat;
  std::size_t d = 0, n = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto fields = split(line, ',');
    std::vector<double> row;
    row.reserve(fields.size());
    std::size_t bad = 0;
    for (auto f : fields) {
      auto v = parse_double(f);
      if (v)
        row.push_back(*v);
      else
        ++bad;
    }
    if (bad) {
      if (n == 0 && d == 0 && bad == fields.size()) {  // header row: no numeric field at all
        d = fields.size();
        continue;
      }
      throw ParseError("csv: non-numeric field", lineno);
    }
    if (d == 0) d = row.size();
    if (row.size() != d)
      throw ParseError(concat("csv: expected ", d, " columns, got ", row.size()), lineno);
    for (double v : row)
      if (!std::isfinite(v)) throw ParseError("csv: non-finite value", lineno);
    flat.insert(flat.end(), row.begin(), row.end());
    ++n;
  }
  Dataset ds;
  ds.points = to_matrix(flat, n, d);
  return ds;
}

/// Maps raw class values to 0..C-1. Values already in 0..C-1 are kept;
/// anything else (e.g. -1/+1) is remapped in ascending order.
inline int normalize_labels(std::vector<int>& labels) {
  if (labels.empty()) return 0;
  std::vector<int> distinct(labels);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.front() >= 0) return std::max(2, distinct.back() + 1);
  for (int& l : labels)
    l = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), l) - distinct.begin());
  return std::max<int>(2, static_cast<int>(distinct.size()));
}

inline Dataset load_libsvm(const std::string& path) {
  auto in = open_in(path);
  struct Entry {
    std::size_t row, col;
    double value;
  };
  std::vector<Entry> entries;
  std::vector<int> labels;
  std::size_t d = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::vector<std::string_view> tokens;
    for (auto t : split(line, ' '))
      if (!blank(t)) tokens.push_back(t);
    auto label = parse_double(tokens[0]);
    if (!label || *label != std::floor(*label)) throw ParseError("libsvm: bad label", lineno);
    const std::size_t row = labels.size();
    labels.push_back(static_cast<int>(*label));
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) throw ParseError("libsvm: expected idx:val", lineno);
      auto idx = parse_double(tokens[t].substr(0, colon));
      auto val = parse_double(tokens[t].substr(colon + 1));
      if (!idx || !val || *idx < 1 || *idx != std::floor(*idx))
        throw ParseError("libsvm: bad feature", lineno);
      if (!std::isfinite(*val)) throw ParseError("libsvm: non-finite value", lineno);
      auto col = static_cast<std::size_t>(*idx);
      d = std::max(d, col);
      entries.push_back({row, col - 1, *val});
    }
  }
  Dataset ds;
  ds.points = RowMatrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(d));
  for (const auto& e : entries)
    ds.points(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) = e.value;
  ds.classes = normalize_labels(labels);
  ds.labels = std::move(labels);
  return ds;
}

inline Dataset load_f32raw(const std::string& path) {
  auto meta_in = open_in(path + ".meta");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(concat("f32raw: bad sidecar: ", e.what()), 0);
  }
  if (!meta.contains("n") || !meta.contains("d")) throw ParseError("f32raw: sidecar needs n and d", 0);
  const auto n = meta["n"].get<std::size_t>();
  const auto d = meta["d"].get<std::size_t>();
  auto in = open_in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != n * d * 4)
    throw ParseError(concat("f32raw: expected ", n * d * 4, " bytes, got ", bytes.size()), 0);
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < n * d; ++k) {
    std::uint32_t bits = std::uint32_t(bytes[4 * k]) | std::uint32_t(bytes[4 * k + 1]) << 8 |
                         std::uint32_t(bytes[4 * k + 2]) << 16 | std::uint32_t(bytes[4 * k + 3]) << 24;
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f)) throw ParseError(concat("f32raw: non-finite value at element ", k), 0);
    m.data()[k] = f;
  }
  Dataset ds;
  ds.points = std::move(m);
  return ds;
}

}  // namespace detail

/// Reads a dataset; row order follows the file.
inline Dataset load_dataset(const std::string& path, Format format) {
  Dataset ds;
  switch (format) {
    case Format::csv: ds = detail::load_csv(path); break;
    case Format::libsvm: ds = detail::load_libsvm(path); break;
    case Format::f32raw: ds = detail::load_f32raw(path); break;
  }
  ds.validate();
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path, Format format) {
  switch (format) {
    case Format::csv: {
      auto out = detail::open_out(path);
      for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t k = 0; k < ds.dim(); ++k)
          out << (k ? "," : "") << detail::format_double(ds.points(Eigen::Index(i), Eigen::Index(k)));
        out << '\n';
      }
      break;
    }
    case Format::libsvm: {
      auto out = detail::open_out(path);
      for (std::size_t i = 0; i < ds.n(); ++i) {
        out << (ds.has_labels() ? ds.labels[i] : 0);
        for (std::size_t k = 0; k < ds.dim(); ++k) {
          double v = ds.points(Eigen::Index(i), Eigen::Index(k));
          if (v != 0.0) out << ' ' << k + 1 << ':' << detail::format_double(v);
        }
        out << '\n';
      }
      break;
    }
    case Format::f32raw: {
      auto out = detail::open_out(path, std::ios::binary);
      for (std::size_t k = 0; k < ds.n() * ds.dim(); ++k) {
        float f = static_cast<float>(ds.points.data()[k]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        const char b[4] = {char(bits & 0xff), char(bits >> 8 & 0xff), char(bits >> 16 & 0xff), char(bits >> 24)};
        out.write(b, 4);
      }
      auto meta = detail::open_out(path + ".meta");
      meta << nlohmann::json{{"n", ds.n()}, {"d", ds.dim()}}.dump() << '\n';
      break;
    }
  }
}

/// Labels file: CSV rows "index,label" with 0-based indices. Points not
/// listed stay unlabeled. Returns one entry per point.
inline std::vector<int> load_labels(const std::string& path, std::size_t n) {
  auto in = detail::open_in(path);
  std::vector<int> labels(n, kUnlabeled);
  std::string line;
  std::size_t lineno = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    auto f = detail::split(line, ',');
    auto idx = f.size() >= 2 ? detail::parse_double(f[0]) : std::nullopt;
    auto lab = f.size() >= 2 ? detail::parse_double(f[1]) : std::nullopt;
    if (!idx || !lab) {
      if (!any && lineno == 1) continue;  // header
      throw ParseError("labels: expected 'index,label'", lineno);
    }
    any = true;
    if (*idx < 0 || *idx >= double(n) || *idx != std::floor(*idx))
      throw ParseError(detail::concat("labels: index ", *idx, " outside 0..", n - 1), lineno);
    if (*lab < 0 || *lab != std::floor(*lab)) throw ParseError("labels: label must be a non-negative integer", lineno);
    labels[static_cast<std::size_t>(*idx)] = static_cast<int>(*lab);
  }
  return labels;
}

inline void save_labels(const std::vector<int>& labels, const std::string& path) {
  auto out = detail::open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kUnlabeled) out << i << ',' << labels[i] << '\n';
}

/// Attaches labels to a dataset; C is inferred as max label + 1 (at least 2).
inline void attach_labels(Dataset& ds, std::vector<int> labels) {
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  ds.labels = std::move(labels);
  ds.classes = std::max(2, max_label + 1);
  ds.validate();
}

/// Draws round(fraction * N) labeled points without replacement. Only points
/// that carry a label are eligible. Pure in (ds, fraction, seed).
inline LabelSplit make_split(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!ds.has_labels()) detail::fail("make_split: dataset has no labels");
  if (!(fraction > 0.0 && fraction < 1.0)) detail::fail("make_split: fraction ", fraction, " not in (0,1)");
  std::vector<Index> pool;
  for (std::size_t i = 0; i < ds.n(); ++i)
    if (ds.labels[i] != kUnlabeled) pool.push_back(static_cast<Index>(i));
  if (pool.empty()) detail::fail("make_split: dataset has no labeled points");
  auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.n())));
  count = std::clamp<std::size_t>(count, 1, pool.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {  // partial Fisher-Yates
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return {std::move(pool), seed, fraction};
}

enum class SyntheticKind { two_gaussians, uniform_cube };

inline SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "two_gaussians") return SyntheticKind::two_gaussians;
  if (name == "uniform_cube") return SyntheticKind::uniform_cube;
  detail::fail("unknown synthetic kind '", name, "'");
}

/// two_gaussians: first ceil(n/2) points are class 0 around (-2,0,...,0), the
/// rest class 1 around (+2,0,...,0), unit variance. uniform_cube: unlabeled
/// points in [0,1]^d.
inline Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n < 2) detail::fail("make_synthetic: n must be >= 2");
  if (d < 1) detail::fail("make_synthetic: d must be >= 1");
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  if (kind == SyntheticKind::uniform_cube) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index k = 0; k < ds.points.size(); ++k) ds.points.data()[k] = u(rng);
    return ds;
  }
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t first = (n + 1) / 2;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = i < first ? 0 : 1;
    ds.labels[i] = c;
    for (std::size_t k = 0; k < d; ++k) {
      double mean = (k == 0) ? (c == 0 ? -2.0 : 2.0) : 0.0;
      ds.points(Eigen::Index(i), Eigen::Index(k)) = mean + g(rng);
    }
  }
  ds.classes = 2;
  return ds;
}

}  // namespace vdt
