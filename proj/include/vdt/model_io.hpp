#pragma once

// Binary model file.
//
//   "VDT1" | u32 header length | JSON header | payload | u32 crc32
//
// The payload is little-endian: sigma (f64), the leaf permutation (u32 each),
// the node table (parent, left, right, count as u32; s2, scatter, s1[d] as
// f64) and the mark table (a, b as u32; q as f64) in block-id order. The
// CRC covers every byte before it.

#include "vdt/block_model.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace vdt {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "model I/O assumes a little-endian host");

class ByteWriter {
public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    bytes.insert(bytes.end(), c, c + n);
  }
  std::vector<unsigned char> bytes;
};

class ByteReader {
public:
  ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  void raw(void* p, std::size_t n) {
    if (pos_ + n > size_) fail("corrupt model file: truncated payload");
    std::memcpy(p, data_ + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return size_ - pos_; }

private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::uint32_t checksum(const unsigned char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

/// Serialises a model with q filled. Deterministic: equal models give equal bytes.
inline std::vector<unsigned char> encode_model(const BlockModel& model) {
  if (!model.has_q()) detail::fail("save_model: q not optimized");
  const auto& tree = model.tree();
  const nlohmann::json header = {
      {"format_version", kModelFormatVersion},
      {"n", tree.n()},
      {"d", tree.dim()},
      {"sigma", model.sigma()},
      {"block_count", model.block_count()},
      {"node_count", tree.node_count()},
      {"ell", lower_bound(model)},
  };
  const std::string text = header.dump();

  detail::ByteWriter w;
  w.raw("VDT1", 4);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text.data(), text.size());
  w.f64(model.sigma());
  for (Index p : tree.perm()) w.u32(p);
  for (Index id = 0; id < tree.node_count(); ++id) {
    const auto& node = tree.node(id);
    w.u32(node.parent);
    w.u32(node.left);
    w.u32(node.right);
    w.u32(node.count);
    w.f64(node.s2);
    w.f64(node.scatter);
    for (Eigen::Index k = 0; k < Eigen::Index(tree.dim()); ++k) w.f64(tree.s1(id)(k));
  }
  for (const auto& blk : model.blocks()) {
    w.u32(blk.a);
    w.u32(blk.b);
    w.f64(blk.q);
  }
  w.u32(detail::checksum(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

/// Parses and validates a model: partition validity and row sums within 1e-9.
inline BlockModel decode_model(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "VDT1", 4) != 0) detail::fail("corrupt model file: bad magic");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (stored != detail::checksum(bytes.data(), bytes.size() - 4)) detail::fail("corrupt model file: checksum mismatch");

  detail::ByteReader r(bytes.data() + 4, bytes.size() - 8);
  const std::uint32_t header_len = r.u32();
  if (header_len > r.remaining()) detail::fail("corrupt model file: truncated header");
  std::string text(header_len, '\0');
  r.raw(text.data(), header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    detail::fail("corrupt model file: unreadable header");
  }
  if (header.value("format_version", -1) != kModelFormatVersion)
    detail::fail("unsupported model format version ", header.value("format_version", -1));
  const auto n = header.at("n").get<std::size_t>();
  const auto d = header.at("d").get<std::size_t>();
  const auto blocks = header.at("block_count").get<std::size_t>();
  const auto node_count = header.at("node_count").get<std::size_t>();
  if (n < 2 || node_count != 2 * n - 1 || d < 1) detail::fail("corrupt model file: inconsistent header");
  const std::size_t expected = 8 + 4 * n + node_count * (16 + 16 + 8 * d) + blocks * 16;
  if (r.remaining() != expected) detail::fail("corrupt model file: payload size mismatch");

  const double sigma = r.f64();
  std::vector<Index> perm(n);
  for (auto& p : perm) p = r.u32();
  std::vector<TreeNode> nodes(node_count);
  RowMatrix s1(static_cast<Eigen::Index>(node_count), static_cast<Eigen::Index>(d));
  for (Index id = 0; id < node_count; ++id) {
    auto& node = nodes[id];
    node.parent = r.u32();
    node.left = r.u32();
    node.right = r.u32();
    node.count = r.u32();
    node.s2 = r.f64();
    node.scatter = r.f64();
    for (Eigen::Index k = 0; k < Eigen::Index(d); ++k) s1(id, k) = r.f64();
    if (id < n) {
      node.lo = id;
      node.hi = id + 1;
    } else {
      if (node.left >= id || node.right >= id) detail::fail("corrupt model file: bad node table");
      node.lo = nodes[node.left].lo;
      node.hi = nodes[node.right].hi;
    }
  }
  auto tree = std::make_shared<const PartitionTree>(PartitionTree::from_parts(std::move(nodes), std::move(s1), std::move(perm)));

  BlockModel model(tree);
  model.set_sigma(sigma);
  for (std::size_t i = 0; i < blocks; ++i) {
    const Index a = r.u32(), b = r.u32();
    if (a >= node_count || b >= node_count) detail::fail("corrupt model file: bad mark table");
    const Index id = model.add_block(a, b);
    model.block(id).q = r.f64();
  }
  model.mark_q_ready(true);
  validate_partition(model);
  if (max_row_error(model) > 1e-9) detail::fail("model file violates row-stochasticity");
  model.set_ell(lower_bound(model));
  return model;
}

inline void save_model(const BlockModel& model, const std::string& path) {
  const auto bytes = encode_model(model);
  auto out = detail::open_out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) detail::fail("cannot write '", path, "'");
}

inline BlockModel load_model(const std::string& path) {
  auto in = detail::open_in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

}  // namespace vdt
