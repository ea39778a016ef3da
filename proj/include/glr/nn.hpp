// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "glr/tensor.hpp"

namespace glr {

/// Ordered collection of named tensors. Used for weights, gradients and
/// optimizer moments; iteration order is insertion order.
template <typename T>
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw ShapeError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

  Tensor<T>& at(std::string_view name) { return entries_[lookup(name)].second; }
  const Tensor<T>& at(std::string_view name) const { return entries_[lookup(name)].second; }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& [name, t] : entries_) out.add(name, Tensor<T>(t.dims()));
    return out;
  }

  void set_zero() {
    for (auto& [_, t] : entries_) t.fill(T(0));
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

 private:
  std::size_t lookup(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ShapeError("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Requires identical names, order and shapes.
template <typename T, typename U>
void require_same_layout(const ParamSet<T>& a, const ParamSet<U>& b, const std::string& what) {
  if (a.size() != b.size()) throw ShapeError(what + ": parameter count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.entry(i).first != b.entry(i).first) {
      throw ShapeError(what + ": parameter '" + a.entry(i).first + "' vs '" + b.entry(i).first + "'");
    }
    require_shape(b.entry(i).second.dims(), a.entry(i).second.dims(), what + " '" + a.entry(i).first + "'");
  }
}

// Convolution -----------------------------------------------------------------

/// Cross-correlation with zero same-padding ((k - 1) / 2), k in {1, 3}.
/// x: (B, Cin, H, W), w: (Cout, Cin / groups, k, k), b: (Cout).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int groups);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;  // empty when not requested
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride, int groups,
                               bool input_grad = true);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// dy masked by pre > 0; the subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& pre, const Tensor<T>& dy);

enum class UpsampleMode { nearest, bilinear };

/// Doubles H and W of a (B, C, H, W) tensor. Bilinear uses half-pixel
/// (align_corners = false) sampling with edge clamping.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x, UpsampleMode mode);

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy, UpsampleMode mode);

template <typename T>
Tensor<T> avg_pool2x(const Tensor<T>& x);

// Residual block ----------------------------------------------------------------

/// y = skip(x) + conv3x3(relu(conv3x3(x))), skip = identity when
/// in == out, otherwise a 1x1 projection. All convolutions use `groups`.
struct ResBlockSpec {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int groups = 1;

  bool projects() const { return in_channels != out_channels; }
  std::string param(std::string_view conv, std::string_view kind) const {
    return name + "." + std::string(conv) + "." + std::string(kind);
  }
};

/// Weight/bias shapes of a resblock in registration order.
std::vector<std::pair<std::string, Shape>> resblock_param_shapes(const ResBlockSpec& spec);

template <typename T>
struct ResBlockCache {
  Tensor<T> input;
  Tensor<T> hidden;  // conv1 output, before relu
};

template <typename T>
Tensor<T> resblock_forward(const ResBlockSpec& spec, const ParamSet<T>& params, const Tensor<T>& x,
                           ResBlockCache<T>* cache);

/// Accumulates parameter gradients into grads; returns dL/dx (empty when
/// input_grad is false).
template <typename T>
Tensor<T> resblock_backward(const ResBlockSpec& spec, const ParamSet<T>& params, const ResBlockCache<T>& cache,
                            const Tensor<T>& dy, ParamSet<T>& grads, bool input_grad = true);

// Optimization ------------------------------------------------------------------

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  ParamSet<T> first_moment;
  ParamSet<T> second_moment;
  std::int64_t step = 0;

  static AdamState fresh(const ParamSet<T>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update of params in place.
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, double lr,
               const AdamHyper& hyper = {});

template <typename T>
double global_norm(const ParamSet<T>& grads);

/// Scales grads by max_norm / norm when the global L2 norm exceeds max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_global_norm(ParamSet<T>& grads, double max_norm);

template <typename T>
bool all_finite(const ParamSet<T>& set) {
  for (const auto& [_, t] : set)
    if (!t.all_finite()) return false;
  return true;
}

// Gradient verification ---------------------------------------------------------

/// A scalar objective plus a signature of its piecewise-linear regime (for
/// ReLU networks, a hash of the activation pattern). Central differences are
/// only meaningful when both probes share the signature of the base point.
struct FdEvaluation {
  double value = 0.0;
  std::uint64_t signature = 0;
};

/// Folds the ReLU on/off pattern of `pre` into a running signature.
std::uint64_t relu_signature(std::uint64_t seed, std::span<const float> pre);
std::uint64_t relu_signature(std::uint64_t seed, std::span<const double> pre);

struct FiniteDiffOptions {
  double step = 1e-5;
  int samples = 200;
  std::uint64_t seed = 0;
  int retries = 3;  // step is divided by 10 on each regime change
};

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  int checked = 0;
  int skipped = 0;  // coordinates whose probes never stayed in one regime
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic against central differences (f(p + h) - f(p - h)) / 2h
/// on a seeded random subsample of coordinates, at least one per tensor.
/// Relative error is |a - n| / max(|a|, |n|). Throws NumericError if f is
/// not finite.
template <typename T>
FiniteDiffReport finite_diff_check(const std::function<FdEvaluation(const ParamSet<T>&)>& f, ParamSet<T> params,
                                   const ParamSet<T>& analytic, const FiniteDiffOptions& options = {});

}  // namespace glr
