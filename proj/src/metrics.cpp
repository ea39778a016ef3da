// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "glr/error.hpp"

namespace glr {

namespace {

void require_same(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
    throw ShapeError("image metrics need equal shapes");
  }
  if (a.data.empty()) throw ShapeError("image metrics need non-empty images");
}

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

}  // namespace

double mse(const ImageBuffer& a, const ImageBuffer& b) {
  require_same(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(m));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  require_same(a, b);
  if (a.height < kWindow || a.width < kWindow) throw ShapeError("ssim needs images of at least 11x11");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  const int oh = a.height - kWindow + 1;
  const int ow = a.width - kWindow + 1;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < kWindow; ++i) {
          for (int j = 0; j < kWindow; ++j) {
            const double w = g[i] * g[j];
            const double va = a.at(c, y + i, x + j);
            const double vb = b.at(c, y + i, x + j);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        }
        const double var_a = saa - ma * ma;
        const double var_b = sbb - mb * mb;
        const double cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      }
    }
  }
  return total / (static_cast<double>(a.channels) * oh * ow);
}

}  // namespace glr
