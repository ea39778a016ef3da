// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/tensor_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace glr {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw ParseError("truncated GLRT header", 0);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::size_t glrt_byte_size(const Shape& dims) { return 16 + 4 * dims.size() + 4 * shape_numel(dims); }

void write_glrt(std::ostream& out, const Tensor<float>& t) {
  out.write("GLRT", 4);
  put_u32(out, kGlrtVersion);
  put_u32(out, kGlrtFloat32);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int d : t.dims()) put_u32(out, static_cast<std::uint32_t>(d));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  } else {
    for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw IoError("failed to write GLRT tensor");
}

void write_glrt(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_glrt(out, t);
}

Tensor<float> read_glrt(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || std::string_view(magic.data(), 4) != "GLRT") throw ParseError("bad GLRT magic", 0);
  if (const auto v = get_u32(in); v != kGlrtVersion) {
    throw ParseError("unsupported GLRT version " + std::to_string(v), 0);
  }
  if (const auto dt = get_u32(in); dt != kGlrtFloat32) {
    throw ParseError("unsupported GLRT dtype " + std::to_string(dt), 0);
  }
  const auto rank = get_u32(in);
  if (rank > 16) throw ParseError("implausible GLRT rank " + std::to_string(rank), 0);
  Shape dims(rank);
  for (auto& d : dims) {
    const auto v = get_u32(in);
    if (v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) throw ParseError("GLRT dim overflow", 0);
    d = static_cast<int>(v);
  }
  Tensor<float> t(dims);
  if constexpr (std::endian::native == std::endian::little) {
    const auto bytes = static_cast<std::streamsize>(t.size() * sizeof(float));
    in.read(reinterpret_cast<char*>(t.data()), bytes);
    if (in.gcount() != bytes) throw ParseError("truncated GLRT data", 0);
  } else {
    for (auto& v : t.storage()) v = std::bit_cast<float>(get_u32(in));
  }
  return t;
}

Tensor<float> read_glrt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_glrt(in);
}

}  // namespace glr
