// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "glr/tensor.hpp"

namespace glr {

/// Channel-major image, row-major within a channel. Color images hold values
/// in [0, 1].
struct ImageBuffer {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  ImageBuffer() = default;
  ImageBuffer(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

/// Pixel rectangle in full-image coordinates.
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;

  bool inside(int full_width, int full_height) const {
    return x0 >= 0 && y0 >= 0 && width > 0 && height > 0 && x0 + width <= full_width &&
           y0 + height <= full_height;
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

ImageBuffer crop(const ImageBuffer& img, const Rect& r);
ImageBuffer clamp01(ImageBuffer img);

/// (C, H, W) or (1, C, H, W) tensor to image and back.
ImageBuffer to_image(const Tensor<float>& t);
Tensor<float> to_tensor(const ImageBuffer& img);

/// Binary P6, 8-bit. Values are rounded to the nearest of 256 levels.
void write_ppm(std::ostream& out, const ImageBuffer& img);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_ppm(std::istream& in);
ImageBuffer read_ppm(const std::filesystem::path& path);

/// Round-trips an image through 8-bit quantization.
ImageBuffer quantize8(const ImageBuffer& img);

}  // namespace glr
