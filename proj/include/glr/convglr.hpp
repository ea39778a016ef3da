// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "glr/camera.hpp"
#include "glr/image.hpp"
#include "glr/nn.hpp"
#include "glr/psv.hpp"

namespace glr {

enum class RenderVariant { shared, specialized };

struct ModelConfig {
  int depths = 128;  // D
  int group = 4;     // G
  int channels = 128;  // C
  int views = 9;     // V, fixes the input convolution width
  RenderVariant variant = RenderVariant::shared;
  UpsampleMode upsample = UpsampleMode::nearest;
  bool positional = true;
  bool angular = true;
  DepthSampling sampling = DepthSampling::uniform_depth;

  int grouped_depths() const { return depths / group; }
  int view_channels() const { return angular ? 4 : 3; }
  int input_channels() const { return view_channels() * group * views + (positional ? 2 : 0); }
  int render_stages() const;

  /// Throws ShapeError naming the violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string to_string(RenderVariant v);
std::string to_string(UpsampleMode m);
std::string to_string(DepthSampling s);
RenderVariant parse_variant(const std::string& s);
UpsampleMode parse_upsample(const std::string& s);
DepthSampling parse_sampling(const std::string& s);

/// Saved activations of one forward pass, one slot per layer.
template <typename T>
struct Tape {
  std::vector<ResBlockCache<T>> slots;
};

/// Convolutional global latent renderer:
///   grouped PSV (D_G, C_in_g, H, W)
///   -> multi-view matching  Y (D_G, 4C, H/4, W/4)
///   -> global latent render Z (1, 4C, H/4, W/4)
///   -> upsampling head      (1, 3, H, W)
/// Depth groups ride the batch dimension until the rendering stage collapses
/// them pairwise, log2(D_G) times.
template <typename T>
class ConvGlr {
 public:
  explicit ConvGlr(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, Shape>> parameter_shapes() const;

  Tensor<T> multi_view_matching(const Tensor<T>& grouped, const ParamSet<T>& w, Tape<T>* tape = nullptr) const;
  Tensor<T> global_latent_render(const Tensor<T>& latent, const ParamSet<T>& w, Tape<T>* tape = nullptr) const;
  Tensor<T> upsample_head(const Tensor<T>& rendered, const ParamSet<T>& w, Tape<T>* tape = nullptr) const;

  /// Unclamped (1, 3, H, W) output.
  Tensor<T> forward(const Tensor<T>& grouped, const ParamSet<T>& w, Tape<T>* tape = nullptr) const;

  /// Accumulates dL/dw into grads given dL/d(output) and the forward tape.
  void backward(const Tensor<T>& d_output, const ParamSet<T>& w, const Tape<T>& tape, ParamSet<T>& grads) const;

  /// Hash of every ReLU on/off decision recorded in the tape.
  std::uint64_t activation_signature(const Tape<T>& tape) const;

  /// Throws ShapeError naming the offending dimension.
  void check_input(const Tensor<T>& grouped) const;

 private:
  struct Conv {
    std::string name;
    int in_channels, out_channels, kernel, stride;
  };
  struct Res {
    ResBlockSpec spec;
  };
  struct Upsample {};
  // Reinterprets (B, C, h, w) as (B / 2, 2C, h, w), or (1, B * C, h, w)
  // when `flatten` is set. No data movement.
  struct View {
    bool flatten;
  };
  using Layer = std::variant<Conv, Res, Upsample, View>;

  Tensor<T> run(std::size_t begin, std::size_t end, Tensor<T> x, const ParamSet<T>& w, Tape<T>* tape) const;

  ModelConfig cfg_;
  std::vector<Layer> layers_;
  std::size_t matching_end_ = 0;
  std::size_t render_end_ = 0;
};

/// Seeded uniform(+-sqrt(1 / fan_in)) initialization of every parameter.
ParamSet<float> init_weights(const ModelConfig& cfg, std::uint64_t seed);

std::size_t rendering_parameter_count(const ParamSet<float>& w);

/// Specialized-variant weights whose per-group rendering blocks are copies of
/// the shared-variant blocks; all other parameters are copied unchanged.
ParamSet<float> replicate_shared_rendering(const ParamSet<float>& shared, const ModelConfig& cfg);

/// Groups the PSV, appends positional channels when configured, and checks
/// the result against cfg.
Tensor<float> model_input(const PlaneSweepVolume& psv, const ModelConfig& cfg);

/// PSV -> clamped image.
ImageBuffer render_view(const PlaneSweepVolume& psv, const ConvGlr<float>& model, const ParamSet<float>& w);

}  // namespace glr
