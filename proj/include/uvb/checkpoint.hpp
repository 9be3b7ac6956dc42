#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "uvb/nets.hpp"

namespace uvb {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// On-disk training state. Everything needed to resume bit-identically:
// parameters in layout order, optimizer moments, the epoch counter, the
// shuffle-stream RNG state, and the effective config echoed as text.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_text;
  std::vector<ParamEntry> layout;
  std::vector<double> params;
  bool has_opt = false;
  std::uint64_t adam_t = 0;
  std::vector<double> adam_m, adam_v;
  std::uint64_t epoch = 0;  // epochs completed
  std::array<std::uint64_t, 4> rng_state{};
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t take_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw CheckpointError(std::string("checkpoint: truncated reading ") + what);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t take_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw CheckpointError(std::string("checkpoint: truncated reading ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline double take_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(take_u64(in, what));
}

inline std::string take_str(std::istream& in, std::uint64_t len, const char* what) {
  if (len > (1ull << 30))
    throw CheckpointError(std::string("checkpoint: implausible length for ") + what);
  std::string s(static_cast<std::size_t>(len), '\0');
  if (len && !in.read(s.data(), static_cast<std::streamsize>(len)))
    throw CheckpointError(std::string("checkpoint: truncated reading ") + what);
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot create " + path);
  out.write("UVB1", 4);
  detail::put_u32(out, c.version);
  detail::put_u64(out, c.config_text.size());
  out.write(c.config_text.data(), static_cast<std::streamsize>(c.config_text.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(c.layout.size()));
  for (const auto& e : c.layout) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put_u64(out, e.offset);
    detail::put_u32(out, static_cast<std::uint32_t>(e.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(e.cols));
    out.put(e.is_bias ? 1 : 0);
  }
  detail::put_u64(out, c.params.size());
  for (double v : c.params) detail::put_f64(out, v);
  out.put(c.has_opt ? 1 : 0);
  if (c.has_opt) {
    detail::put_u64(out, c.adam_t);
    for (double v : c.adam_m) detail::put_f64(out, v);
    for (double v : c.adam_v) detail::put_f64(out, v);
  }
  detail::put_u64(out, c.epoch);
  for (std::uint64_t w : c.rng_state) detail::put_u64(out, w);
  if (!out) throw CheckpointError("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "UVB1")
    throw CheckpointError("checkpoint: bad magic in " + path);
  Checkpoint c;
  c.version = detail::take_u32(in, "version");
  if (c.version != 1)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(c.version));
  c.config_text = detail::take_str(in, detail::take_u64(in, "config length"), "config");
  const std::uint32_t n_layout = detail::take_u32(in, "layout count");
  std::size_t total = 0;
  c.layout.reserve(n_layout);
  for (std::uint32_t i = 0; i < n_layout; ++i) {
    ParamEntry e;
    e.name = detail::take_str(in, detail::take_u32(in, "name length"), "layout name");
    e.offset = detail::take_u64(in, "offset");
    e.rows = static_cast<int>(detail::take_u32(in, "rows"));
    e.cols = static_cast<int>(detail::take_u32(in, "cols"));
    int flag = in.get();
    if (flag == EOF) throw CheckpointError("checkpoint: truncated reading bias flag");
    e.is_bias = flag != 0;
    if (e.offset != total)
      throw CheckpointError("checkpoint: layout entry '" + e.name + "' is not contiguous");
    total += static_cast<std::size_t>(e.rows) * e.cols;
    c.layout.push_back(std::move(e));
  }
  const std::uint64_t n_params = detail::take_u64(in, "param count");
  if (n_params != total)
    throw CheckpointError("checkpoint: param count disagrees with layout");
  if (n_params > (1ull << 32))
    throw CheckpointError("checkpoint: implausible param count");
  c.params.resize(static_cast<std::size_t>(n_params));
  for (auto& v : c.params) v = detail::take_f64(in, "params");
  const int has_opt = in.get();
  if (has_opt == EOF) throw CheckpointError("checkpoint: truncated reading opt flag");
  c.has_opt = has_opt != 0;
  if (c.has_opt) {
    c.adam_t = detail::take_u64(in, "adam t");
    c.adam_m.resize(c.params.size());
    c.adam_v.resize(c.params.size());
    for (auto& v : c.adam_m) v = detail::take_f64(in, "adam m");
    for (auto& v : c.adam_v) v = detail::take_f64(in, "adam v");
  }
  c.epoch = detail::take_u64(in, "epoch");
  for (auto& w : c.rng_state) w = detail::take_u64(in, "rng state");
  return c;
}

}  // namespace uvb
