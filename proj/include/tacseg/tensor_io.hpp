#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "tacseg/tensor.hpp"

// Binary tensor fixture format "FTNSR1":
//   magic "FTNSR1" | u32-le rank | rank x u32-le extents | row-major f64-le.
// Used for checkpoints, golden fixtures, and oracle exchange.

namespace tacseg {

inline void write_ftnsr(std::ostream& os, const Tensor& t) {
  os.write("FTNSR1", 6);
  auto put_u32 = [&os](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u32(static_cast<std::uint32_t>(e));
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint64_t bits;
    double v = t[i];
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k)
      b[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
  }
  if (!os) throw IoError("FTNSR1: write failed");
}

inline Tensor read_ftnsr(std::istream& is) {
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, "FTNSR1", 6) != 0)
    throw IoError("FTNSR1: bad magic");
  auto get_u32 = [&is]() {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("FTNSR1: truncated header");
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t rank = get_u32();
  Shape shape(rank);
  for (auto& e : shape) e = get_u32();
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("FTNSR1: truncated payload");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    double v;
    std::memcpy(&v, &bits, 8);
    t[i] = v;
  }
  return t;
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  write_ftnsr(os, t);
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return read_ftnsr(is);
}

}  // namespace tacseg
