// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace glr {
namespace {

unsigned char to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

// Reads one header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

ImageBuffer crop(const ImageBuffer& img, const Rect& r) {
  if (!r.inside(img.width, img.height)) throw ShapeError("crop rectangle outside image");
  ImageBuffer out(img.channels, r.height, r.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) out.at(c, y, x) = img.at(c, r.y0 + y, r.x0 + x);
  return out;
}

ImageBuffer clamp01(ImageBuffer img) {
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

ImageBuffer to_image(const Tensor<float>& t) {
  Shape d = t.dims();
  if (d.size() == 4 && d[0] == 1) d.erase(d.begin());
  if (d.size() != 3) throw ShapeError("expected a (C, H, W) or (1, C, H, W) tensor, got " + to_string(t.dims()));
  ImageBuffer img(d[0], d[1], d[2]);
  std::copy(t.storage().begin(), t.storage().end(), img.data.begin());
  return img;
}

Tensor<float> to_tensor(const ImageBuffer& img) {
  return Tensor<float>({img.channels, img.height, img.width}, img.data);
}

void write_ppm(std::ostream& out, const ImageBuffer& img) {
  if (img.channels != 3) throw ShapeError("PPM output needs a 3-channel image");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = to_byte(img.at(c, y, x));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("failed to write PPM data");
}

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_ppm(out, img);
}

ImageBuffer read_ppm(std::istream& in) {
  if (header_token(in) != "P6") throw ParseError("not a binary PPM (P6) file", 1);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(header_token(in));
    h = std::stoi(header_token(in));
    maxval = std::stoi(header_token(in));
  } catch (const std::exception&) {
    throw ParseError("malformed PPM header", 0);
  }
  if (w <= 0 || h <= 0) throw ParseError("PPM dimensions must be positive", 0);
  if (maxval != 255) throw ParseError("only 8-bit PPM (maxval 255) is supported", 0);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw ParseError("truncated PPM pixel data", 0);
  ImageBuffer img(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
  return img;
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_ppm(in);
}

ImageBuffer quantize8(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (float& v : out.data) v = to_byte(v) / 255.0f;
  return out;
}

}  // namespace glr
