// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "glr/tensor.hpp"

namespace glr {

/// Raw tensor container, little-endian:
///   "GLRT" | u32 version (1) | u32 dtype (0 = f32) | u32 rank | rank x u32 dims | data
/// Data is row-major with the last dimension fastest.
inline constexpr std::uint32_t kGlrtVersion = 1;
inline constexpr std::uint32_t kGlrtFloat32 = 0;

void write_glrt(std::ostream& out, const Tensor<float>& t);
void write_glrt(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_glrt(std::istream& in);
Tensor<float> read_glrt(const std::filesystem::path& path);

/// Encoded size in bytes of a tensor with the given shape.
std::size_t glrt_byte_size(const Shape& dims);

}  // namespace glr
