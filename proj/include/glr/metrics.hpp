// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "glr/image.hpp"

namespace glr {

inline constexpr double kPsnrCap = 99.0;

double mse(const ImageBuffer& a, const ImageBuffer& b);

/// Peak 1.0; identical images give kPsnrCap.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 = 0.01, K2 = 0.03, range 1)
/// over valid window positions, averaged over channels.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace glr
