// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/nn.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Core>

#include "glr/parallel.hpp"

namespace glr {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int batch, cin, h, w, cout, k, stride, groups, ho, wo;
  int cin_g() const { return cin / groups; }
  int cout_g() const { return cout / groups; }
  int patch_len() const { return cin_g() * k * k; }
  std::size_t out_plane() const { return static_cast<std::size_t>(ho) * wo; }
  std::size_t in_plane() const { return static_cast<std::size_t>(h) * w; }
  // 1x1 stride-1 convolutions read the input directly as the column matrix.
  bool direct() const { return k == 1 && stride == 1; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, int stride, int groups) {
  if (x.rank() != 4) throw ShapeError("conv2d input must be (B, C, H, W), got " + to_string(x.dims()));
  if (w.rank() != 4) throw ShapeError("conv2d weight must be (Cout, Cin/groups, k, k), got " + to_string(w.dims()));
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, groups, 0, 0};
  if (groups < 1 || g.cin % groups != 0 || g.cout % groups != 0) {
    throw ShapeError("conv2d channels (" + std::to_string(g.cin) + " -> " + std::to_string(g.cout) +
                     ") not divisible by groups " + std::to_string(groups));
  }
  if (w.dim(1) != g.cin / groups) {
    throw ShapeError("conv2d weight expects " + std::to_string(w.dim(1)) + " input channels per group, input has " +
                     std::to_string(g.cin / groups));
  }
  if (w.dim(2) != w.dim(3) || (g.k != 1 && g.k != 3)) throw ShapeError("conv2d kernel must be 1x1 or 3x3");
  if (stride < 1 || g.h % stride != 0 || g.w % stride != 0) {
    throw ShapeError("conv2d spatial size " + std::to_string(g.h) + "x" + std::to_string(g.w) +
                     " not divisible by stride " + std::to_string(stride));
  }
  g.ho = g.h / stride;
  g.wo = g.w / stride;
  return g;
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const int pad = (g.k - 1) / 2;
  const std::size_t cols = g.out_plane();
  for (int c = 0; c < g.cin_g(); ++c) {
    const T* xc = x + c * g.in_plane();
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride + ky - pad;
          T* out = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.wo, T(0));
            continue;
          }
          const T* in = xc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride + kx - pad;
            out[ox] = (ix >= 0 && ix < g.w) ? in[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const int pad = (g.k - 1) / 2;
  const std::size_t cols = g.out_plane();
  for (int c = 0; c < g.cin_g(); ++c) {
    T* dxc = dx + c * g.in_plane();
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride + ky - pad;
          if (iy < 0 || iy >= g.h) continue;
          const T* in = row + static_cast<std::size_t>(oy) * g.wo;
          T* out = dxc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride + kx - pad;
            if (ix >= 0 && ix < g.w) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

template <typename T>
std::uint64_t sign_hash(std::uint64_t h, std::span<const T> pre) {
  std::uint64_t word = 0;
  int bits = 0;
  auto flush = [&] {
    h ^= word + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    word = 0;
    bits = 0;
  };
  for (T v : pre) {
    word = (word << 1) | (v > T(0) ? 1u : 0u);
    if (++bits == 64) flush();
  }
  if (bits) flush();
  return h;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int groups) {
  const ConvGeometry g = conv_geometry(x, w, stride, groups);
  if (b.size() != static_cast<std::size_t>(g.cout)) throw ShapeError("conv2d bias size must equal Cout");
  Tensor<T> y({g.batch, g.cout, g.ho, g.wo});
  const std::size_t cols = g.out_plane();
  parallel_for(static_cast<std::size_t>(g.batch), [&](std::size_t n) {
    std::vector<T> col_buf(g.direct() ? 0 : static_cast<std::size_t>(g.patch_len()) * cols);
    for (int grp = 0; grp < groups; ++grp) {
      const T* xg = x.data() + (n * g.cin + static_cast<std::size_t>(grp) * g.cin_g()) * g.in_plane();
      const T* col = xg;
      if (!g.direct()) {
        im2col(xg, g, col_buf.data());
        col = col_buf.data();
      }
      ConstMapMat<T> wm(w.data() + static_cast<std::size_t>(grp) * g.cout_g() * g.patch_len(), g.cout_g(),
                        g.patch_len());
      ConstMapMat<T> cm(col, g.patch_len(), static_cast<Eigen::Index>(cols));
      MapMat<T> ym(y.data() + (n * g.cout + static_cast<std::size_t>(grp) * g.cout_g()) * cols, g.cout_g(),
                   static_cast<Eigen::Index>(cols));
      ym.noalias() = wm * cm;
      for (int o = 0; o < g.cout_g(); ++o) ym.row(o).array() += b[static_cast<std::size_t>(grp) * g.cout_g() + o];
    }
  });
  return y;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride, int groups,
                               bool input_grad) {
  const ConvGeometry g = conv_geometry(x, w, stride, groups);
  require_shape(dy.dims(), {g.batch, g.cout, g.ho, g.wo}, "conv2d_backward dy");
  const std::size_t cols = g.out_plane();
  Conv2dGrads<T> grads;
  if (input_grad) grads.input = Tensor<T>(x.dims());
  grads.weight = Tensor<T>(w.dims());
  grads.bias = Tensor<T>({g.cout});

  // Per-sample partial weight gradients, summed in sample order afterwards so
  // the result does not depend on the thread count.
  std::vector<Tensor<T>> partial_w(static_cast<std::size_t>(g.batch));
  std::vector<Tensor<T>> partial_b(static_cast<std::size_t>(g.batch));
  parallel_for(static_cast<std::size_t>(g.batch), [&](std::size_t n) {
    partial_w[n] = Tensor<T>(w.dims());
    partial_b[n] = Tensor<T>({g.cout});
    std::vector<T> col_buf(g.direct() ? 0 : static_cast<std::size_t>(g.patch_len()) * cols);
    std::vector<T> dcol_buf(input_grad && !g.direct() ? static_cast<std::size_t>(g.patch_len()) * cols : 0);
    for (int grp = 0; grp < groups; ++grp) {
      const std::size_t in_off = (n * g.cin + static_cast<std::size_t>(grp) * g.cin_g()) * g.in_plane();
      const T* col = x.data() + in_off;
      if (!g.direct()) {
        im2col(x.data() + in_off, g, col_buf.data());
        col = col_buf.data();
      }
      const std::size_t w_off = static_cast<std::size_t>(grp) * g.cout_g() * g.patch_len();
      ConstMapMat<T> cm(col, g.patch_len(), static_cast<Eigen::Index>(cols));
      ConstMapMat<T> dym(dy.data() + (n * g.cout + static_cast<std::size_t>(grp) * g.cout_g()) * cols, g.cout_g(),
                         static_cast<Eigen::Index>(cols));
      MapMat<T> dwm(partial_w[n].data() + w_off, g.cout_g(), g.patch_len());
      dwm.noalias() = dym * cm.transpose();
      // Plain loop: a vectorized sum would depend on the buffer alignment.
      for (int o = 0; o < g.cout_g(); ++o) {
        T s = T(0);
        for (Eigen::Index c = 0; c < dym.cols(); ++c) s += dym(o, c);
        partial_b[n][static_cast<std::size_t>(grp) * g.cout_g() + o] = s;
      }
      if (input_grad) {
        ConstMapMat<T> wm(w.data() + w_off, g.cout_g(), g.patch_len());
        if (g.direct()) {
          MapMat<T> dxm(grads.input.data() + in_off, g.cin_g(), static_cast<Eigen::Index>(cols));
          dxm.noalias() = wm.transpose() * dym;
        } else {
          MapMat<T> dcm(dcol_buf.data(), g.patch_len(), static_cast<Eigen::Index>(cols));
          dcm.noalias() = wm.transpose() * dym;
          col2im_add(dcol_buf.data(), g, grads.input.data() + in_off);
        }
      }
    }
  });
  for (int n = 0; n < g.batch; ++n) {
    for (std::size_t i = 0; i < grads.weight.size(); ++i) grads.weight[i] += partial_w[n][i];
    for (std::size_t i = 0; i < grads.bias.size(); ++i) grads.bias[i] += partial_b[n][i];
  }
  return grads;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.storage()) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& pre, const Tensor<T>& dy) {
  require_shape(dy.dims(), pre.dims(), "relu_backward");
  Tensor<T> dx(pre.dims());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = pre[i] > T(0) ? dy[i] : T(0);
  return dx;
}

namespace {

// Source taps and weights for half-pixel 2x upsampling along one axis.
struct LinearTap {
  int i0, i1;
  double w0, w1;
};

std::vector<LinearTap> bilinear_taps(int n_in) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(n_in) * 2);
  for (int o = 0; o < n_in * 2; ++o) {
    const double src = std::max(0.0, (o + 0.5) * 0.5 - 0.5);
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, n_in - 1);
    const double l1 = src - i0;
    taps[o] = {i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

template <typename T>
void require_rank4(const Tensor<T>& x, const char* what) {
  if (x.rank() != 4) throw ShapeError(std::string(what) + " expects (B, C, H, W), got " + to_string(x.dims()));
}

}  // namespace

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x, UpsampleMode mode) {
  require_rank4(x, "upsample2x");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({x.dim(0), x.dim(1), 2 * h, 2 * w});
  const std::size_t in_plane = static_cast<std::size_t>(h) * w, out_plane = in_plane * 4;
  if (mode == UpsampleMode::nearest) {
    for (int p = 0; p < planes; ++p) {
      const T* in = x.data() + p * in_plane;
      T* out = y.data() + p * out_plane;
      for (int oy = 0; oy < 2 * h; ++oy)
        for (int ox = 0; ox < 2 * w; ++ox) out[static_cast<std::size_t>(oy) * 2 * w + ox] = in[(oy / 2) * w + ox / 2];
    }
    return y;
  }
  const auto ty = bilinear_taps(h), tx = bilinear_taps(w);
  for (int p = 0; p < planes; ++p) {
    const T* in = x.data() + p * in_plane;
    T* out = y.data() + p * out_plane;
    for (int oy = 0; oy < 2 * h; ++oy) {
      const LinearTap& a = ty[oy];
      for (int ox = 0; ox < 2 * w; ++ox) {
        const LinearTap& b = tx[ox];
        const T top = T(b.w0) * in[a.i0 * w + b.i0] + T(b.w1) * in[a.i0 * w + b.i1];
        const T bot = T(b.w0) * in[a.i1 * w + b.i0] + T(b.w1) * in[a.i1 * w + b.i1];
        out[static_cast<std::size_t>(oy) * 2 * w + ox] = T(a.w0) * top + T(a.w1) * bot;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy, UpsampleMode mode) {
  require_rank4(dy, "upsample2x_backward");
  if (dy.dim(2) % 2 || dy.dim(3) % 2) throw ShapeError("upsample2x_backward needs even spatial dims");
  const int planes = dy.dim(0) * dy.dim(1), h = dy.dim(2) / 2, w = dy.dim(3) / 2;
  Tensor<T> dx({dy.dim(0), dy.dim(1), h, w});
  const std::size_t in_plane = static_cast<std::size_t>(h) * w, out_plane = in_plane * 4;
  if (mode == UpsampleMode::nearest) {
    for (int p = 0; p < planes; ++p) {
      const T* g = dy.data() + p * out_plane;
      T* out = dx.data() + p * in_plane;
      for (int oy = 0; oy < 2 * h; ++oy)
        for (int ox = 0; ox < 2 * w; ++ox) out[(oy / 2) * w + ox / 2] += g[static_cast<std::size_t>(oy) * 2 * w + ox];
    }
    return dx;
  }
  const auto ty = bilinear_taps(h), tx = bilinear_taps(w);
  for (int p = 0; p < planes; ++p) {
    const T* g = dy.data() + p * out_plane;
    T* out = dx.data() + p * in_plane;
    for (int oy = 0; oy < 2 * h; ++oy) {
      const LinearTap& a = ty[oy];
      for (int ox = 0; ox < 2 * w; ++ox) {
        const LinearTap& b = tx[ox];
        const T v = g[static_cast<std::size_t>(oy) * 2 * w + ox];
        out[a.i0 * w + b.i0] += T(a.w0 * b.w0) * v;
        out[a.i0 * w + b.i1] += T(a.w0 * b.w1) * v;
        out[a.i1 * w + b.i0] += T(a.w1 * b.w0) * v;
        out[a.i1 * w + b.i1] += T(a.w1 * b.w1) * v;
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> avg_pool2x(const Tensor<T>& x) {
  require_rank4(x, "avg_pool2x");
  if (x.dim(2) % 2 || x.dim(3) % 2) throw ShapeError("avg_pool2x needs even spatial dims");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
  Tensor<T> y({x.dim(0), x.dim(1), h, w});
  for (int p = 0; p < planes; ++p) {
    const T* in = x.data() + static_cast<std::size_t>(p) * h * w * 4;
    T* out = y.data() + static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < h; ++oy)
      for (int ox = 0; ox < w; ++ox) {
        const T* r0 = in + static_cast<std::size_t>(2 * oy) * 2 * w + 2 * ox;
        const T* r1 = r0 + 2 * w;
        out[oy * w + ox] = (r0[0] + r0[1] + r1[0] + r1[1]) / T(4);
      }
  }
  return y;
}

// Residual block -------------------------------------------------------------

std::vector<std::pair<std::string, Shape>> resblock_param_shapes(const ResBlockSpec& s) {
  if (s.groups < 1 || s.in_channels % s.groups || s.out_channels % s.groups) {
    throw ShapeError("resblock '" + s.name + "' channels not divisible by groups");
  }
  const int in_g = s.in_channels / s.groups, out_g = s.out_channels / s.groups;
  std::vector<std::pair<std::string, Shape>> shapes{
      {s.param("conv1", "weight"), {s.out_channels, in_g, 3, 3}},
      {s.param("conv1", "bias"), {s.out_channels}},
      {s.param("conv2", "weight"), {s.out_channels, out_g, 3, 3}},
      {s.param("conv2", "bias"), {s.out_channels}},
  };
  if (s.projects()) {
    shapes.push_back({s.param("skip", "weight"), {s.out_channels, in_g, 1, 1}});
    shapes.push_back({s.param("skip", "bias"), {s.out_channels}});
  }
  return shapes;
}

template <typename T>
Tensor<T> resblock_forward(const ResBlockSpec& s, const ParamSet<T>& p, const Tensor<T>& x, ResBlockCache<T>* cache) {
  if (x.rank() != 4 || x.dim(1) != s.in_channels) {
    throw ShapeError("resblock '" + s.name + "' expects " + std::to_string(s.in_channels) + " channels, got " +
                     to_string(x.dims()));
  }
  Tensor<T> hidden = conv2d(x, p.at(s.param("conv1", "weight")), p.at(s.param("conv1", "bias")), 1, s.groups);
  Tensor<T> y = conv2d(relu(hidden), p.at(s.param("conv2", "weight")), p.at(s.param("conv2", "bias")), 1, s.groups);
  if (s.projects()) {
    const Tensor<T> skip = conv2d(x, p.at(s.param("skip", "weight")), p.at(s.param("skip", "bias")), 1, s.groups);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += skip[i];
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
  }
  if (cache) {
    cache->input = x;
    cache->hidden = std::move(hidden);
  }
  return y;
}

template <typename T>
Tensor<T> resblock_backward(const ResBlockSpec& s, const ParamSet<T>& p, const ResBlockCache<T>& cache,
                            const Tensor<T>& dy, ParamSet<T>& grads, bool input_grad) {
  auto accumulate = [&](const std::string& name, const Tensor<T>& g) {
    Tensor<T>& dst = grads.at(name);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  };
  const Tensor<T> activated = relu(cache.hidden);
  auto g2 = conv2d_backward(activated, p.at(s.param("conv2", "weight")), dy, 1, s.groups, true);
  accumulate(s.param("conv2", "weight"), g2.weight);
  accumulate(s.param("conv2", "bias"), g2.bias);
  const Tensor<T> dhidden = relu_backward(cache.hidden, g2.input);
  auto g1 = conv2d_backward(cache.input, p.at(s.param("conv1", "weight")), dhidden, 1, s.groups, input_grad);
  accumulate(s.param("conv1", "weight"), g1.weight);
  accumulate(s.param("conv1", "bias"), g1.bias);

  Tensor<T> dx;
  if (s.projects()) {
    auto gs = conv2d_backward(cache.input, p.at(s.param("skip", "weight")), dy, 1, s.groups, input_grad);
    accumulate(s.param("skip", "weight"), gs.weight);
    accumulate(s.param("skip", "bias"), gs.bias);
    if (input_grad) {
      dx = std::move(g1.input);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gs.input[i];
    }
  } else if (input_grad) {
    dx = std::move(g1.input);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  }
  return dx;
}

// Optimization ---------------------------------------------------------------

template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, double lr,
               const AdamHyper& hyper) {
  require_same_layout(params, grads, "adam_step grads");
  require_same_layout(params, state.first_moment, "adam_step first moment");
  require_same_layout(params, state.second_moment, "adam_step second moment");
  state.step += 1;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = params.entry(k).second;
    const Tensor<T>& g = grads.entry(k).second;
    Tensor<T>& m = state.first_moment.entry(k).second;
    Tensor<T>& v = state.second_moment.entry(k).second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      const double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      p[i] = static_cast<T>(p[i] - lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon));
    }
  }
}

template <typename T>
double global_norm(const ParamSet<T>& grads) {
  double sq = 0.0;
  for (const auto& [_, t] : grads)
    for (T v : t.values()) sq += static_cast<double>(v) * v;
  return std::sqrt(sq);
}

template <typename T>
double clip_global_norm(ParamSet<T>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ShapeError("clip_global_norm needs max_norm > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    double scale = max_norm / norm;
    const ParamSet<T> unclipped = grads;
    // Rounding to T can leave the result a few ulps above max_norm.
    for (int attempt = 0; attempt < 8; ++attempt) {
      for (auto& [name, t] : grads) {
        const Tensor<T>& src = unclipped.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(src[i] * scale);
      }
      if (global_norm(grads) <= max_norm) break;
      scale *= 1.0 - 4.0 * std::numeric_limits<T>::epsilon();
    }
  }
  return norm;
}

template <typename T>
FiniteDiffReport finite_diff_check(const std::function<FdEvaluation(const ParamSet<T>&)>& f, ParamSet<T> params,
                                   const ParamSet<T>& analytic, const FiniteDiffOptions& options) {
  require_same_layout(params, analytic, "finite_diff_check");
  auto eval = [&](const ParamSet<T>& p) {
    FdEvaluation e = f(p);
    if (!std::isfinite(e.value)) throw NumericError("objective is not finite during finite differencing");
    return e;
  };
  const FdEvaluation base = eval(params);

  std::mt19937_64 rng(options.seed);
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, params.entry(k).second.size() - 1);
    coords.emplace_back(k, pick(rng));
  }
  const std::size_t total = params.scalar_count();
  std::uniform_int_distribution<std::size_t> any(0, total - 1);
  while (coords.size() < static_cast<std::size_t>(options.samples)) {
    std::size_t flat = any(rng);
    std::size_t k = 0;
    while (flat >= params.entry(k).second.size()) flat -= params.entry(k++).second.size();
    coords.emplace_back(k, flat);
  }

  FiniteDiffReport report;
  for (const auto& [k, i] : coords) {
    T& slot = params.entry(k).second[i];
    const T original = slot;
    double step = options.step;
    bool done = false;
    for (int attempt = 0; attempt <= options.retries && !done; ++attempt, step /= 10.0) {
      slot = static_cast<T>(original + step);
      const double actual_plus = static_cast<double>(slot) - original;
      const FdEvaluation plus = eval(params);
      slot = static_cast<T>(original - step);
      const double actual_minus = original - static_cast<double>(slot);
      const FdEvaluation minus = eval(params);
      slot = original;
      if (plus.signature != base.signature || minus.signature != base.signature) continue;
      const double numeric = (plus.value - minus.value) / (actual_plus + actual_minus);
      const double a = analytic.entry(k).second[i];
      const double denom = std::max(std::abs(a), std::abs(numeric));
      const double rel = denom > 0.0 ? std::abs(a - numeric) / denom : 0.0;
      if (report.checked++ == 0 || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_param = params.entry(k).first;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      done = true;
    }
    if (!done) ++report.skipped;
  }
  return report;
}

std::uint64_t relu_signature(std::uint64_t seed, std::span<const float> pre) { return sign_hash(seed, pre); }
std::uint64_t relu_signature(std::uint64_t seed, std::span<const double> pre) { return sign_hash(seed, pre); }

#define GLR_INSTANTIATE(T)                                                                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);                   \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, bool); \
  template Tensor<T> relu(const Tensor<T>&);                                                                   \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> upsample2x(const Tensor<T>&, UpsampleMode);                                               \
  template Tensor<T> upsample2x_backward(const Tensor<T>&, UpsampleMode);                                      \
  template Tensor<T> avg_pool2x(const Tensor<T>&);                                                             \
  template Tensor<T> resblock_forward(const ResBlockSpec&, const ParamSet<T>&, const Tensor<T>&,               \
                                      ResBlockCache<T>*);                                                      \
  template Tensor<T> resblock_backward(const ResBlockSpec&, const ParamSet<T>&, const ResBlockCache<T>&,       \
                                       const Tensor<T>&, ParamSet<T>&, bool);                                  \
  template void adam_step(ParamSet<T>&, const ParamSet<T>&, AdamState<T>&, double, const AdamHyper&);          \
  template double global_norm(const ParamSet<T>&);                                                             \
  template double clip_global_norm(ParamSet<T>&, double);                                                      \
  template FiniteDiffReport finite_diff_check(const std::function<FdEvaluation(const ParamSet<T>&)>&,          \
                                              ParamSet<T>, const ParamSet<T>&, const FiniteDiffOptions&);

GLR_INSTANTIATE(float)
GLR_INSTANTIATE(double)

#undef GLR_INSTANTIATE

}  // namespace glr
