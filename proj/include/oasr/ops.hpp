#pragma once

// Forward and backward kernels for the differentiable operations. All functions
// are pure: they read their arguments and return freshly allocated tensors.

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <memory>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "oasr/tensor.hpp"

namespace oasr::ops {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using MapConstMat = Eigen::Map<const RowMat<T>>;
template <class T>
using StridedMat = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using StridedConstMat = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements; larger images are processed in row bands.
inline constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

struct ConvGeometry {
  std::size_t batch, in_ch, out_ch, height, width, kh, kw, ph, pw;
  std::size_t taps() const { return in_ch * kh * kw; }
  std::size_t plane() const { return height * width; }
  std::size_t band_rows() const {
    const std::size_t per_row = std::max<std::size_t>(1, taps() * width);
    return std::clamp<std::size_t>(kColumnBudget / per_row, 1, height);
  }
  bool pointwise() const { return kh == 1 && kw == 1; }
};

template <class T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.rank() != 4 || ws.rank() != 4)
    throw std::invalid_argument("conv2d: input and weight must be rank 4");
  if (ws[2] % 2 == 0 || ws[3] % 2 == 0)
    throw std::invalid_argument("conv2d: kernel extents must be odd, got " + ws.str());
  if (ws[1] != xs.c())
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(ws[1]) +
                                " input channels, input has " + std::to_string(xs.c()));
  return {xs.n(), xs.c(), ws[0], xs.h(), xs.w(), ws[2], ws[3], (ws[2] - 1) / 2, (ws[3] - 1) / 2};
}

// Gathers the receptive fields of output rows [y0, y1) into cols (taps x band*W).
template <class T>
void im2col(const T* in, const ConvGeometry& g, std::size_t y0, std::size_t y1, T* cols) {
  const std::size_t W = g.width, H = g.height, band = (y1 - y0) * W;
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    const T* src = in + c * g.plane();
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * band;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pw);
        const std::size_t x_lo = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
        const std::size_t x_hi = dx > 0 ? W - std::min<std::size_t>(W, dx) : W;
        for (std::size_t y = y0; y < y1; ++y, row += W) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - static_cast<std::ptrdiff_t>(g.ph);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H) || x_lo >= x_hi) {
            std::fill(row, row + W, T(0));
            continue;
          }
          const T* line = src + static_cast<std::size_t>(sy) * W;
          std::fill(row, row + x_lo, T(0));
          for (std::size_t x = x_lo; x < x_hi; ++x) row[x] = line[static_cast<std::ptrdiff_t>(x) + dx];
          std::fill(row + x_hi, row + W, T(0));
        }
      }
    }
  }
}

// Scatter-adds cols back onto the input image (adjoint of im2col).
template <class T>
void col2im(const T* cols, const ConvGeometry& g, std::size_t y0, std::size_t y1, T* out) {
  const std::size_t W = g.width, H = g.height, band = (y1 - y0) * W;
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    T* dst = out + c * g.plane();
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * band;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pw);
        const std::size_t x_lo = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
        const std::size_t x_hi = dx > 0 ? W - std::min<std::size_t>(W, dx) : W;
        for (std::size_t y = y0; y < y1; ++y, row += W) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - static_cast<std::ptrdiff_t>(g.ph);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          T* line = dst + static_cast<std::size_t>(sy) * W;
          for (std::size_t x = x_lo; x < x_hi; ++x) line[static_cast<std::ptrdiff_t>(x) + dx] += row[x];
        }
      }
    }
  }
}

}  // namespace detail

/// "Same" zero-padded 2-D convolution (cross-correlation) with odd kernel extents.
/// weight is (Cout, Cin, kh, kw); bias is (Cout).
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  using namespace detail;
  const ConvGeometry g = conv_geometry(x, weight);
  if (bias.shape().rank() != 1 || bias.size() != g.out_ch)
    throw std::invalid_argument("conv2d: bias must have " + std::to_string(g.out_ch) + " elements");

  Tensor<T> out(Shape{g.batch, g.out_ch, g.height, g.width});
  MapConstMat<T> wmat(weight.data().data(), g.out_ch, g.taps());
  const std::size_t band_rows = g.band_rows();
  std::unique_ptr<T[]> cols(new T[g.pointwise() ? 0 : g.taps() * band_rows * g.width]);  // fully overwritten per band

  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* in = x.data().data() + n * g.in_ch * g.plane();
    T* dst = out.data().data() + n * g.out_ch * g.plane();
    if (g.pointwise()) {
      MapMat<T>(dst, g.out_ch, g.plane()).noalias() = wmat * MapConstMat<T>(in, g.in_ch, g.plane());
    } else {
      for (std::size_t y0 = 0; y0 < g.height; y0 += band_rows) {
        const std::size_t y1 = std::min(g.height, y0 + band_rows);
        const std::size_t band = (y1 - y0) * g.width;
        im2col(in, g, y0, y1, cols.get());
        StridedMat<T>(dst + y0 * g.width, g.out_ch, band, Eigen::OuterStride<>(g.plane())).noalias() =
            wmat * MapConstMat<T>(cols.get(), g.taps(), band);
      }
    }
    for (std::size_t o = 0; o < g.out_ch; ++o) {
      T* p = dst + o * g.plane();
      const T b = bias[o];
      for (std::size_t k = 0; k < g.plane(); ++k) p[k] += b;
    }
  }
  return out;
}

template <class T>
struct ConvGrads {
  Tensor<T> input, weight, bias;
};

/// Adjoint of conv2d given the upstream gradient dy.
template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy) {
  using namespace detail;
  const ConvGeometry g = conv_geometry(x, weight);
  if (!(dy.shape() == Shape{g.batch, g.out_ch, g.height, g.width}))
    throw std::invalid_argument("conv2d_backward: output gradient shape " + dy.shape().str());

  ConvGrads<T> grads{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>(Shape{g.out_ch})};
  MapConstMat<T> wmat(weight.data().data(), g.out_ch, g.taps());
  MapMat<T> dw(grads.weight.data().data(), g.out_ch, g.taps());
  const std::size_t band_rows = g.band_rows();
  const std::size_t col_elems = g.pointwise() ? 0 : g.taps() * band_rows * g.width;
  std::unique_ptr<T[]> cols(new T[col_elems]);  // fully overwritten per band
  std::unique_ptr<T[]> dcols(new T[col_elems]);

  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* in = x.data().data() + n * g.in_ch * g.plane();
    const T* gout = dy.data().data() + n * g.out_ch * g.plane();
    T* gin = grads.input.data().data() + n * g.in_ch * g.plane();
    for (std::size_t o = 0; o < g.out_ch; ++o) {
      const T* p = gout + o * g.plane();
      T s = 0;
      for (std::size_t k = 0; k < g.plane(); ++k) s += p[k];
      grads.bias[o] += s;
    }
    if (g.pointwise()) {
      MapConstMat<T> dymat(gout, g.out_ch, g.plane());
      dw.noalias() += dymat * MapConstMat<T>(in, g.in_ch, g.plane()).transpose();
      MapMat<T>(gin, g.in_ch, g.plane()).noalias() = wmat.transpose() * dymat;
      continue;
    }
    for (std::size_t y0 = 0; y0 < g.height; y0 += band_rows) {
      const std::size_t y1 = std::min(g.height, y0 + band_rows);
      const std::size_t band = (y1 - y0) * g.width;
      StridedConstMat<T> dymat(gout + y0 * g.width, g.out_ch, band, Eigen::OuterStride<>(g.plane()));
      im2col(in, g, y0, y1, cols.get());
      dw.noalias() += dymat * MapConstMat<T>(cols.get(), g.taps(), band).transpose();
      MapMat<T>(dcols.get(), g.taps(), band).noalias() = wmat.transpose() * dymat;
      col2im(dcols.get(), g, y0, y1, gin);
    }
  }
  return grads;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

/// Gradient passes where x > 0; the subgradient at 0 is 0.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

/// Logistic function clamped to the open interval (0, 1): in finite precision
/// large |v| would otherwise round to exactly 0 or 1.
template <class T>
T logistic(T v) {
  T y;
  if (v >= T(0)) {
    y = T(1) / (T(1) + std::exp(-v));
  } else {
    const T e = std::exp(v);
    y = e / (T(1) + e);
  }
  return std::clamp(y, std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data()) v = logistic(v);
  return out;
}

/// Takes the forward output y = sigmoid(x).
template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
  return dx;
}

/// out = x * weight^T + bias, with x (N, Din), weight (Dout, Din), bias (Dout).
template <class T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  using namespace detail;
  if (x.shape().rank() != 2 || weight.shape().rank() != 2 || weight.shape()[1] != x.shape()[1])
    throw std::invalid_argument("fully_connected: dims " + x.shape().str() + " x " +
                                weight.shape().str() + "^T do not agree");
  const std::size_t n = x.shape()[0], din = x.shape()[1], dout = weight.shape()[0];
  if (bias.size() != dout) throw std::invalid_argument("fully_connected: bias size mismatch");
  Tensor<T> out(Shape{n, dout});
  MapMat<T> y(out.data().data(), n, dout);
  y.noalias() = MapConstMat<T>(x.data().data(), n, din) *
                MapConstMat<T>(weight.data().data(), dout, din).transpose();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dout; ++c) out.at(r, c) += bias[c];
  return out;
}

template <class T>
struct FcGrads {
  Tensor<T> input, weight, bias;
};

template <class T>
FcGrads<T> fully_connected_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy) {
  using namespace detail;
  const std::size_t n = x.shape()[0], din = x.shape()[1], dout = weight.shape()[0];
  FcGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>(Shape{dout})};
  MapConstMat<T> dymat(dy.data().data(), n, dout);
  MapMat<T>(g.input.data().data(), n, din).noalias() = dymat * MapConstMat<T>(weight.data().data(), dout, din);
  MapMat<T>(g.weight.data().data(), dout, din).noalias() =
      dymat.transpose() * MapConstMat<T>(x.data().data(), n, din);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dout; ++c) g.bias[c] += dy.at(r, c);
  return g;
}

/// Per-channel spatial mean: (N, C, H, W) -> (N, C).
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.rank() != 4) throw std::invalid_argument("global_avg_pool: expected rank 4, got " + s.str());
  const std::size_t plane = s.h() * s.w();
  Tensor<T> out(Shape{s.n(), s.c()});
  for (std::size_t k = 0; k < s.n() * s.c(); ++k) {
    const T* p = x.data().data() + k * plane;
    T acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out[k] = acc / static_cast<T>(plane);
  }
  return out;
}

template <class T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& dz) {
  const std::size_t plane = input_shape.h() * input_shape.w();
  Tensor<T> dx(input_shape);
  for (std::size_t k = 0; k < dz.size(); ++k) {
    const T v = dz[k] / static_cast<T>(plane);
    std::fill_n(dx.data().begin() + static_cast<std::ptrdiff_t>(k * plane), plane, v);
  }
  return dx;
}

/// out[n,c,h,w] = alpha[n,c] * x[n,c,h,w].
template <class T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& alpha) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || !(alpha.shape() == Shape{s.n(), s.c()}))
    throw std::invalid_argument("channel_scale: alpha " + alpha.shape().str() + " does not match " + s.str());
  const std::size_t plane = s.h() * s.w();
  Tensor<T> out(s);
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const T a = alpha[k];
    for (std::size_t i = k * plane; i < (k + 1) * plane; ++i) out[i] = a * x[i];
  }
  return out;
}

template <class T>
struct ScaleGrads {
  Tensor<T> input, alpha;
};

template <class T>
ScaleGrads<T> channel_scale_backward(const Tensor<T>& x, const Tensor<T>& alpha, const Tensor<T>& dy) {
  const std::size_t plane = x.shape().h() * x.shape().w();
  ScaleGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(alpha.shape())};
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const T a = alpha[k];
    T acc = 0;
    for (std::size_t i = k * plane; i < (k + 1) * plane; ++i) {
      g.input[i] = a * dy[i];
      acc += x[i] * dy[i];
    }
    g.alpha[k] = acc;
  }
  return g;
}

/// (N, C*R*R, H, W) -> (N, C, R*H, R*W) with
/// out[n, c, R*y+dy, R*x+dx] = in[n, c*R*R + dy*R + dx, y, x].
template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || r < 1 || s.c() % (r * r) != 0)
    throw std::invalid_argument("pixel_shuffle: " + std::to_string(s.c()) +
                                " channels not divisible by R^2 for R=" + std::to_string(r));
  const std::size_t c_out = s.c() / (r * r);
  Tensor<T> out(Shape{s.n(), c_out, s.h() * r, s.w() * r});
  for (std::size_t n = 0; n < s.n(); ++n)
    for (std::size_t c = 0; c < c_out; ++c)
      for (std::size_t dy = 0; dy < r; ++dy)
        for (std::size_t dx = 0; dx < r; ++dx)
          for (std::size_t y = 0; y < s.h(); ++y)
            for (std::size_t xx = 0; xx < s.w(); ++xx)
              out.at(n, c, r * y + dy, r * xx + dx) = x.at(n, c * r * r + dy * r + dx, y, xx);
  return out;
}

/// Exact inverse of pixel_shuffle; also its backward pass.
template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || r < 1 || s.h() % r != 0 || s.w() % r != 0)
    throw std::invalid_argument("pixel_unshuffle: spatial dims of " + s.str() +
                                " not divisible by " + std::to_string(r));
  const std::size_t h = s.h() / r, w = s.w() / r;
  Tensor<T> out(Shape{s.n(), s.c() * r * r, h, w});
  for (std::size_t n = 0; n < s.n(); ++n)
    for (std::size_t c = 0; c < s.c(); ++c)
      for (std::size_t dy = 0; dy < r; ++dy)
        for (std::size_t dx = 0; dx < r; ++dx)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
              out.at(n, c * r * r + dy * r + dx, y, xx) = x.at(n, c, r * y + dy, r * xx + dx);
  return out;
}

}  // namespace oasr::ops
