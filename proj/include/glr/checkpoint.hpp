// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "glr/convglr.hpp"

namespace glr {

/// Self-describing model checkpoint. The file starts with an ASCII manifest:
///
///   GLRCKPT 1
///   config D=.. G=.. C=.. V=.. variant=.. upsample=.. pos_enc=0|1 ang_enc=0|1 sampling=..
///   step <n>
///   param <name> f32 <rank> <dims...> <byte offset>
///   ...
///   end
///
/// followed by one GLRT record per param at the listed offset (relative to
/// the first byte after the manifest). Adam moments, when saved, are stored
/// as params named "adam.m/<name>" and "adam.v/<name>".
struct Checkpoint {
  ModelConfig config;
  ParamSet<float> weights;
  std::optional<AdamState<float>> optimizer;
  std::int64_t step = 0;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string format_model_config(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& line);

}  // namespace glr
