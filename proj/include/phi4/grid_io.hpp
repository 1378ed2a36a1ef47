#pragma once

#include "phi4/grid.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace phi4 {

// Field file layout: 16-byte header (u32 N, u32 d, 8 reserved bytes, all
// little-endian), followed by M^3 float64 values little-endian, row-major.

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64_le(std::string& out, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  put_u64_le(out, v);
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline double get_f64_le(const unsigned char* p) {
  std::uint64_t v = get_u64_le(p);
  double x;
  std::memcpy(&x, &v, 8);
  return x;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace detail

inline std::string encode_field(const GridField& f) {
  std::string out;
  out.reserve(16 + 8 * static_cast<std::size_t>(f.values.size()));
  detail::put_u32_le(out, static_cast<std::uint32_t>(f.grid.level));
  detail::put_u32_le(out, 3u);
  detail::put_u64_le(out, 0u);  // reserved
  for (Eigen::Index i = 0; i < f.values.size(); ++i) detail::put_f64_le(out, f.values[i]);
  return out;
}

inline GridField decode_field(const std::string& bytes) {
  if (bytes.size() < 16) throw std::runtime_error("field file truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t level = detail::get_u32_le(p);
  const std::uint32_t d = detail::get_u32_le(p + 4);
  if (d != 3) throw std::runtime_error("field file has dimension " + std::to_string(d) + ", expected 3");
  Grid g = make_grid(static_cast<int>(level));
  const std::size_t n = static_cast<std::size_t>(g.site_count());
  if (bytes.size() != 16 + 8 * n) throw std::runtime_error("field file size does not match grid");
  GridField f(g);
  for (std::size_t i = 0; i < n; ++i)
    f.values[static_cast<Eigen::Index>(i)] = detail::get_f64_le(p + 16 + 8 * i);
  return f;
}

inline void save_field(const GridField& f, const std::string& path) {
  detail::write_file_bytes(path, encode_field(f));
}

inline GridField load_field(const std::string& path) {
  return decode_field(detail::read_file_bytes(path));
}

}  // namespace phi4
