// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/convglr.hpp"

#include <bit>
#include <cmath>
#include <random>

namespace glr {

int ModelConfig::render_stages() const { return std::countr_zero(static_cast<unsigned>(grouped_depths())); }

void ModelConfig::validate() const {
  if (depths < 1) throw ShapeError("D must be positive, got " + std::to_string(depths));
  if (group < 1 || depths % group != 0) {
    throw ShapeError("D = " + std::to_string(depths) + " is not divisible by G = " + std::to_string(group));
  }
  const int dg = grouped_depths();
  if (dg < 2 || !std::has_single_bit(static_cast<unsigned>(dg))) {
    throw ShapeError("D_G = D / G = " + std::to_string(dg) + " must be a power of two >= 2");
  }
  if (channels < 1) throw ShapeError("C must be positive, got " + std::to_string(channels));
  if (views < 1) throw ShapeError("V must be positive, got " + std::to_string(views));
}

std::string to_string(RenderVariant v) { return v == RenderVariant::shared ? "shared" : "specialized"; }
std::string to_string(UpsampleMode m) { return m == UpsampleMode::nearest ? "nearest" : "bilinear"; }
std::string to_string(DepthSampling s) { return s == DepthSampling::uniform_depth ? "depth" : "disparity"; }

RenderVariant parse_variant(const std::string& s) {
  if (s == "shared") return RenderVariant::shared;
  if (s == "specialized") return RenderVariant::specialized;
  throw ParseError("unknown rendering variant '" + s + "' (shared|specialized)", 0);
}

UpsampleMode parse_upsample(const std::string& s) {
  if (s == "nearest") return UpsampleMode::nearest;
  if (s == "bilinear") return UpsampleMode::bilinear;
  throw ParseError("unknown upsample mode '" + s + "' (nearest|bilinear)", 0);
}

DepthSampling parse_sampling(const std::string& s) {
  if (s == "depth" || s == "uniform_depth") return DepthSampling::uniform_depth;
  if (s == "disparity" || s == "uniform_disparity") return DepthSampling::uniform_disparity;
  throw ParseError("unknown depth sampling '" + s + "' (depth|disparity)", 0);
}

template <typename T>
ConvGlr<T>::ConvGlr(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.channels;
  auto res = [&](std::string name, int in, int out, int groups = 1) {
    layers_.push_back(Res{ResBlockSpec{std::move(name), in, out, groups}});
  };

  layers_.push_back(Conv{"match.conv_in", cfg_.input_channels(), c, 3, 1});
  for (int i = 0; i < 2; ++i) res("match.level0.block" + std::to_string(i), c, c);
  layers_.push_back(Conv{"match.down1", c, 2 * c, 3, 2});
  for (int i = 0; i < 3; ++i) res("match.level1.block" + std::to_string(i), 2 * c, 2 * c);
  layers_.push_back(Conv{"match.down2", 2 * c, 4 * c, 3, 2});
  for (int i = 0; i < 4; ++i) res("match.level2.block" + std::to_string(i), 4 * c, 4 * c);
  matching_end_ = layers_.size();

  const int stages = cfg_.render_stages();
  if (cfg_.variant == RenderVariant::shared) {
    for (int k = 0; k < stages; ++k) {
      layers_.push_back(View{false});
      res("render.stage" + std::to_string(k), 8 * c, 4 * c);
    }
  } else {
    layers_.push_back(View{true});
    for (int k = 0; k < stages; ++k) {
      const int groups = cfg_.grouped_depths() >> (k + 1);
      res("render.stage" + std::to_string(k), groups * 8 * c, groups * 4 * c, groups);
    }
  }
  render_end_ = layers_.size();

  layers_.push_back(Upsample{});
  res("upsample.level1.block0", 4 * c, 2 * c);
  for (int i = 1; i < 3; ++i) res("upsample.level1.block" + std::to_string(i), 2 * c, 2 * c);
  layers_.push_back(Upsample{});
  res("upsample.level0.block0", 2 * c, c);
  res("upsample.level0.block1", c, c);
  layers_.push_back(Conv{"output", c, 3, 1, 1});
}

template <typename T>
std::vector<std::pair<std::string, Shape>> ConvGlr<T>::parameter_shapes() const {
  std::vector<std::pair<std::string, Shape>> shapes;
  for (const Layer& layer : layers_) {
    if (const auto* conv = std::get_if<Conv>(&layer)) {
      shapes.push_back({conv->name + ".weight", {conv->out_channels, conv->in_channels, conv->kernel, conv->kernel}});
      shapes.push_back({conv->name + ".bias", {conv->out_channels}});
    } else if (const auto* r = std::get_if<Res>(&layer)) {
      for (auto& s : resblock_param_shapes(r->spec)) shapes.push_back(std::move(s));
    }
  }
  return shapes;
}

template <typename T>
void ConvGlr<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 4) throw ShapeError("model input must be (D_G, C_in_g, H, W), got " + to_string(x.dims()));
  if (x.dim(0) != cfg_.grouped_depths()) {
    throw ShapeError("model input depth groups D_G = " + std::to_string(x.dim(0)) + ", config expects " +
                     std::to_string(cfg_.grouped_depths()));
  }
  if (x.dim(1) != cfg_.input_channels()) {
    throw ShapeError("model input channels C_in_g = " + std::to_string(x.dim(1)) + ", config expects " +
                     std::to_string(cfg_.input_channels()));
  }
  if (x.dim(2) % 4 != 0) throw ShapeError("model input height H = " + std::to_string(x.dim(2)) + " not divisible by 4");
  if (x.dim(3) % 4 != 0) throw ShapeError("model input width W = " + std::to_string(x.dim(3)) + " not divisible by 4");
}

template <typename T>
Tensor<T> ConvGlr<T>::run(std::size_t begin, std::size_t end, Tensor<T> x, const ParamSet<T>& w,
                          Tape<T>* tape) const {
  if (tape && tape->slots.size() != layers_.size()) tape->slots.resize(layers_.size());
  for (std::size_t i = begin; i < end; ++i) {
    const Layer& layer = layers_[i];
    if (const auto* conv = std::get_if<Conv>(&layer)) {
      Tensor<T> y = conv2d(x, w.at(conv->name + ".weight"), w.at(conv->name + ".bias"), conv->stride, 1);
      if (tape) tape->slots[i].input = std::move(x);
      x = std::move(y);
    } else if (const auto* r = std::get_if<Res>(&layer)) {
      x = resblock_forward(r->spec, w, x, tape ? &tape->slots[i] : nullptr);
    } else if (std::holds_alternative<Upsample>(layer)) {
      x = upsample2x(x, cfg_.upsample);
    } else {
      const View& v = std::get<View>(layer);
      if (v.flatten) {
        x.reshape({1, x.dim(0) * x.dim(1), x.dim(2), x.dim(3)});
      } else {
        if (x.dim(0) % 2) throw ShapeError("cannot pair an odd number of depths");
        x.reshape({x.dim(0) / 2, 2 * x.dim(1), x.dim(2), x.dim(3)});
      }
    }
  }
  return x;
}

template <typename T>
Tensor<T> ConvGlr<T>::multi_view_matching(const Tensor<T>& grouped, const ParamSet<T>& w, Tape<T>* tape) const {
  check_input(grouped);
  return run(0, matching_end_, grouped, w, tape);
}

template <typename T>
Tensor<T> ConvGlr<T>::global_latent_render(const Tensor<T>& latent, const ParamSet<T>& w, Tape<T>* tape) const {
  const int c4 = 4 * cfg_.channels;
  if (latent.rank() != 4 || latent.dim(0) != cfg_.grouped_depths() || latent.dim(1) != c4) {
    throw ShapeError("latent volume must be (" + std::to_string(cfg_.grouped_depths()) + ", " + std::to_string(c4) +
                     ", h, w), got " + to_string(latent.dims()));
  }
  return run(matching_end_, render_end_, latent, w, tape);
}

template <typename T>
Tensor<T> ConvGlr<T>::upsample_head(const Tensor<T>& rendered, const ParamSet<T>& w, Tape<T>* tape) const {
  const int c4 = 4 * cfg_.channels;
  if (rendered.rank() != 4 || rendered.dim(0) != 1 || rendered.dim(1) != c4) {
    throw ShapeError("rendered latent must be (1, " + std::to_string(c4) + ", h, w), got " +
                     to_string(rendered.dims()));
  }
  return run(render_end_, layers_.size(), rendered, w, tape);
}

template <typename T>
Tensor<T> ConvGlr<T>::forward(const Tensor<T>& grouped, const ParamSet<T>& w, Tape<T>* tape) const {
  check_input(grouped);
  return run(0, layers_.size(), grouped, w, tape);
}

template <typename T>
void ConvGlr<T>::backward(const Tensor<T>& d_output, const ParamSet<T>& w, const Tape<T>& tape,
                          ParamSet<T>& grads) const {
  if (tape.slots.size() != layers_.size()) throw ShapeError("tape does not belong to this model");
  auto accumulate = [&](const std::string& name, const Tensor<T>& g) {
    Tensor<T>& dst = grads.at(name);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  };
  Tensor<T> dy = d_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Layer& layer = layers_[i];
    const bool input_grad = i > 0;
    if (const auto* conv = std::get_if<Conv>(&layer)) {
      auto g = conv2d_backward(tape.slots[i].input, w.at(conv->name + ".weight"), dy, conv->stride, 1, input_grad);
      accumulate(conv->name + ".weight", g.weight);
      accumulate(conv->name + ".bias", g.bias);
      dy = std::move(g.input);
    } else if (const auto* r = std::get_if<Res>(&layer)) {
      dy = resblock_backward(r->spec, w, tape.slots[i], dy, grads, input_grad);
    } else if (std::holds_alternative<Upsample>(layer)) {
      dy = upsample2x_backward(dy, cfg_.upsample);
    } else {
      // Every view consumes (B, 4C, h, w).
      const int c4 = 4 * cfg_.channels;
      const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
      dy.reshape({static_cast<int>(dy.size() / (c4 * plane)), c4, dy.dim(2), dy.dim(3)});
    }
  }
}

template <typename T>
std::uint64_t ConvGlr<T>::activation_signature(const Tape<T>& tape) const {
  std::uint64_t h = 0;
  for (std::size_t i = 0; i < layers_.size() && i < tape.slots.size(); ++i) {
    if (std::holds_alternative<Res>(layers_[i])) h = relu_signature(h, tape.slots[i].hidden.values());
  }
  return h;
}

template class ConvGlr<float>;
template class ConvGlr<double>;

ParamSet<float> init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  const ConvGlr<float> model(cfg);
  std::mt19937_64 rng(seed);
  ParamSet<float> w;
  const auto shapes = model.parameter_shapes();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& [name, dims] = shapes[i];
    // Biases share the fan-in of the weight registered just before them.
    const Shape& wdims = dims.size() == 4 ? dims : shapes[i - 1].second;
    const double fan_in = static_cast<double>(wdims[1]) * wdims[2] * wdims[3];
    std::uniform_real_distribution<double> dist(-std::sqrt(1.0 / fan_in), std::sqrt(1.0 / fan_in));
    Tensor<float> t(dims);
    for (float& v : t.storage()) v = static_cast<float>(dist(rng));
    w.add(name, std::move(t));
  }
  return w;
}

std::size_t rendering_parameter_count(const ParamSet<float>& w) {
  std::size_t n = 0;
  for (const auto& [name, t] : w)
    if (name.starts_with("render.")) n += t.size();
  return n;
}

ParamSet<float> replicate_shared_rendering(const ParamSet<float>& shared, const ModelConfig& cfg) {
  ModelConfig spec_cfg = cfg;
  spec_cfg.variant = RenderVariant::specialized;
  const ConvGlr<float> model(spec_cfg);
  ParamSet<float> out;
  for (const auto& [name, dims] : model.parameter_shapes()) {
    const Tensor<float>& src = shared.at(name);
    if (src.dims() == dims) {
      out.add(name, src);
      continue;
    }
    if (src.dims().size() != dims.size() || dims[0] % src.dim(0) != 0) {
      throw ShapeError("cannot replicate '" + name + "' from " + to_string(src.dims()) + " to " + to_string(dims));
    }
    Tensor<float> t(dims);
    const std::size_t copies = static_cast<std::size_t>(dims[0] / src.dim(0));
    if (t.size() != copies * src.size()) throw ShapeError("replicated shape mismatch for '" + name + "'");
    for (std::size_t k = 0; k < copies; ++k) std::copy(src.storage().begin(), src.storage().end(), t.data() + k * src.size());
    out.add(name, std::move(t));
  }
  return out;
}

Tensor<float> model_input(const PlaneSweepVolume& psv, const ModelConfig& cfg) {
  cfg.validate();
  if (psv.depth_count() != cfg.depths) {
    throw ShapeError("PSV has D = " + std::to_string(psv.depth_count()) + " depth planes, model expects " +
                     std::to_string(cfg.depths));
  }
  if (psv.view_count() != cfg.views) {
    throw ShapeError("PSV has V = " + std::to_string(psv.view_count()) + " views, model expects " +
                     std::to_string(cfg.views));
  }
  if (psv.channels() != cfg.view_channels()) {
    throw ShapeError("PSV has Cin = " + std::to_string(psv.channels()) + " channels per view, model expects " +
                     std::to_string(cfg.view_channels()) + (cfg.angular ? " (angular channel on)" : ""));
  }
  GroupedPSV g = group_depths(psv, cfg.group);
  if (cfg.positional) g = append_positional_channels(g);
  return std::move(g.data);
}

ImageBuffer render_view(const PlaneSweepVolume& psv, const ConvGlr<float>& model, const ParamSet<float>& w) {
  return clamp01(to_image(model.forward(model_input(psv, model.config()), w)));
}

}  // namespace glr
