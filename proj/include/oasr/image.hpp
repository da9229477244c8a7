#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "oasr/tensor.hpp"

namespace oasr {

/// Interleaved 8-bit RGB image.
struct ImageRgb {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> data;  // R,G,B per pixel, row-major

  ImageRgb() = default;
  ImageRgb(std::size_t h, std::size_t w) : height(h), width(w), data(3 * h * w, 0) {}

  std::uint8_t* px(std::size_t y, std::size_t x) { return data.data() + 3 * (y * width + x); }
  const std::uint8_t* px(std::size_t y, std::size_t x) const { return data.data() + 3 * (y * width + x); }
};

/// Single-channel float image in [0, 255].
struct ImagePlane {
  std::size_t height = 0, width = 0;
  std::vector<float> data;

  ImagePlane() = default;
  ImagePlane(std::size_t h, std::size_t w, float fill = 0.f) : height(h), width(w), data(h * w, fill) {}

  float& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return data[y * width + x]; }

  /// Copies rows [y, y+h) and columns [x, x+w).
  ImagePlane crop(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const {
    if (y + h > height || x + w > width) throw std::out_of_range("ImagePlane::crop outside image");
    ImagePlane out(h, w);
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(data.begin() + static_cast<std::ptrdiff_t>((y + r) * width + x), w,
                  out.data.begin() + static_cast<std::ptrdiff_t>(r * w));
    return out;
  }

  bool operator==(const ImagePlane&) const = default;
};

template <class T = float>
Tensor<T> to_tensor(const ImagePlane& p) {
  return Tensor<T>(Shape{1, 1, p.height, p.width}, std::vector<T>(p.data.begin(), p.data.end()));
}

/// Reads sample n of a (B, 1, H, W) tensor back into a plane (no clamping).
template <class T>
ImagePlane to_plane(const Tensor<T>& t, std::size_t n = 0) {
  const Shape& s = t.shape();
  if (s.rank() != 4 || s.c() != 1) throw std::invalid_argument("to_plane: expected (B,1,H,W), got " + s.str());
  ImagePlane p(s.h(), s.w());
  for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = static_cast<float>(t[n * p.data.size() + i]);
  return p;
}

/// Rounds to the nearest integer level and clamps to [0, 255].
inline ImagePlane quantize(ImagePlane p) {
  for (auto& v : p.data) v = std::clamp(std::nearbyint(v), 0.f, 255.f);
  return p;
}

// ---------------------------------------------------------------------------
// ITU-R BT.601 studio-swing YCbCr.

namespace color {

inline constexpr std::array<std::array<double, 3>, 3> kForward{{
    {65.481, 128.553, 24.966},
    {-37.797, -74.203, 112.0},
    {112.0, -93.786, -18.214},
}};
inline constexpr std::array<double, 3> kOffset{16.0, 128.0, 128.0};

inline const std::array<std::array<double, 3>, 3>& inverse() {
  static const auto inv = [] {
    const auto& m = kForward;
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    std::array<std::array<double, 3>, 3> r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int a = (j + 1) % 3, b = (j + 2) % 3, c = (i + 1) % 3, d = (i + 2) % 3;
        r[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
      }
    return r;
  }();
  return inv;
}

/// rgb in [0, 255] -> (Y, Cb, Cr).
inline std::array<double, 3> rgb_to_ycbcr(double r, double g, double b) {
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i)
    out[i] = kOffset[i] + (kForward[i][0] * r + kForward[i][1] * g + kForward[i][2] * b) / 255.0;
  return out;
}

inline std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr) {
  const auto& inv = inverse();
  const std::array<double, 3> d{y - kOffset[0], cb - kOffset[1], cr - kOffset[2]};
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = 255.0 * (inv[i][0] * d[0] + inv[i][1] * d[1] + inv[i][2] * d[2]);
  return out;
}

}  // namespace color

struct YCbCrPlanes {
  ImagePlane y, cb, cr;
};

inline YCbCrPlanes rgb_to_ycbcr(const ImageRgb& img) {
  YCbCrPlanes out{ImagePlane(img.height, img.width), ImagePlane(img.height, img.width),
                  ImagePlane(img.height, img.width)};
  for (std::size_t i = 0; i < img.height * img.width; ++i) {
    const auto* p = img.data.data() + 3 * i;
    const auto ycc = color::rgb_to_ycbcr(p[0], p[1], p[2]);
    out.y.data[i] = static_cast<float>(ycc[0]);
    out.cb.data[i] = static_cast<float>(ycc[1]);
    out.cr.data[i] = static_cast<float>(ycc[2]);
  }
  return out;
}

inline ImageRgb ycbcr_to_rgb(const ImagePlane& y, const ImagePlane& cb, const ImagePlane& cr) {
  if (y.height != cb.height || y.width != cb.width || y.height != cr.height || y.width != cr.width)
    throw std::invalid_argument("ycbcr_to_rgb: plane dimensions differ");
  ImageRgb out(y.height, y.width);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const auto rgb = color::ycbcr_to_rgb(y.data[i], cb.data[i], cr.data[i]);
    for (int c = 0; c < 3; ++c)
      out.data[3 * i + c] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(rgb[c]), 0.0, 255.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bicubic resampling (a = -0.5), kernel widened by 1/scale when shrinking.

/// Cubic convolution kernel with a = -0.5.
inline double cubic_kernel(double x) {
  const double ax = std::abs(x), ax2 = ax * ax, ax3 = ax2 * ax;
  if (ax <= 1) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
  if (ax <= 2) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
  return 0.0;
}

/// Taps contributing to one output sample along one axis.
struct ResampleTaps {
  std::vector<std::size_t> index;  // clamped to [0, in_len)
  std::vector<double> weight;      // sums to 1
};

inline std::vector<ResampleTaps> resize_weights(std::size_t in_len, std::size_t out_len) {
  if (in_len < 1 || out_len < 1) throw std::invalid_argument("resize_weights: lengths must be >= 1");
  const double scale = static_cast<double>(out_len) / static_cast<double>(in_len);
  const bool shrink = scale < 1.0;
  const double kernel_width = shrink ? 4.0 / scale : 4.0;
  const auto taps = static_cast<std::ptrdiff_t>(std::ceil(kernel_width)) + 2;
  std::vector<ResampleTaps> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / scale - 0.5;
    const auto left = static_cast<std::ptrdiff_t>(std::floor(u - kernel_width / 2));
    auto& t = out[i];
    double total = 0;
    for (std::ptrdiff_t k = 0; k < taps; ++k) {
      const std::ptrdiff_t j = left + k;
      const double d = u - static_cast<double>(j);
      const double w = shrink ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
      if (w == 0.0) continue;
      t.index.push_back(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(in_len) - 1)));
      t.weight.push_back(w);
      total += w;
    }
    for (auto& w : t.weight) w /= total;
  }
  return out;
}

/// Separable bicubic resize; output clamped to [0, 255].
inline ImagePlane bicubic_resize(const ImagePlane& p, std::size_t out_h, std::size_t out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bicubic_resize: output dims must be >= 1");
  const auto wy = resize_weights(p.height, out_h);
  const auto wx = resize_weights(p.width, out_w);
  std::vector<double> rows(out_h * p.width, 0.0);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t k = 0; k < wy[y].index.size(); ++k) {
      const float* src = p.data.data() + wy[y].index[k] * p.width;
      double* dst = rows.data() + y * p.width;
      const double w = wy[y].weight[k];
      for (std::size_t x = 0; x < p.width; ++x) dst[x] += w * src[x];
    }
  ImagePlane out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      double acc = 0;
      for (std::size_t k = 0; k < wx[x].index.size(); ++k) acc += wx[x].weight[k] * rows[y * p.width + wx[x].index[k]];
      out.at(y, x) = static_cast<float>(std::clamp(acc, 0.0, 255.0));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation.

enum class AugmentOp { kRot90, kRot180, kRot270, kHFlip, kScale90, kScale80, kScale70, kScale60, kScale50 };

inline constexpr std::array<AugmentOp, 3> kRotations{AugmentOp::kRot90, AugmentOp::kRot180, AugmentOp::kRot270};
inline constexpr std::array<AugmentOp, 5> kDownscales{AugmentOp::kScale90, AugmentOp::kScale80, AugmentOp::kScale70,
                                                      AugmentOp::kScale60, AugmentOp::kScale50};

inline double augment_scale(AugmentOp op) {
  switch (op) {
    case AugmentOp::kScale90: return 0.9;
    case AugmentOp::kScale80: return 0.8;
    case AugmentOp::kScale70: return 0.7;
    case AugmentOp::kScale60: return 0.6;
    case AugmentOp::kScale50: return 0.5;
    default: return 1.0;
  }
}

inline std::string to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::kRot90: return "rot90";
    case AugmentOp::kRot180: return "rot180";
    case AugmentOp::kRot270: return "rot270";
    case AugmentOp::kHFlip: return "hflip";
    default: return "scale" + std::to_string(static_cast<int>(std::lround(augment_scale(op) * 100)));
  }
}

/// Rotations and flip are exact pixel permutations (rot90 is clockwise:
/// out[x][H-1-y] = in[y][x]); scales use bicubic_resize to ceil(s*H) x ceil(s*W).
inline ImagePlane augment(const ImagePlane& p, AugmentOp op) {
  const std::size_t H = p.height, W = p.width;
  switch (op) {
    case AugmentOp::kRot90: {
      ImagePlane out(W, H);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) out.at(x, H - 1 - y) = p.at(y, x);
      return out;
    }
    case AugmentOp::kRot180: {
      ImagePlane out(H, W);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) out.at(H - 1 - y, W - 1 - x) = p.at(y, x);
      return out;
    }
    case AugmentOp::kRot270: {
      ImagePlane out(W, H);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) out.at(W - 1 - x, y) = p.at(y, x);
      return out;
    }
    case AugmentOp::kHFlip: {
      ImagePlane out(H, W);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) out.at(y, W - 1 - x) = p.at(y, x);
      return out;
    }
    default: {
      const double s = augment_scale(op);
      const auto h = static_cast<std::size_t>(std::ceil(s * static_cast<double>(H) - 1e-9));
      const auto w = static_cast<std::size_t>(std::ceil(s * static_cast<double>(W) - 1e-9));
      return bicubic_resize(p, std::max<std::size_t>(h, 1), std::max<std::size_t>(w, 1));
    }
  }
}

// ---------------------------------------------------------------------------
// Degradation and colour reconstruction.

struct LrHrPair {
  ImagePlane lr, hr;
};

/// Crops hr to multiples of R (top-left anchored) and bicubic-downscales it.
/// With `quantize_lr`, the LR plane is rounded to integer levels as an 8-bit
/// pipeline would store it.
inline LrHrPair make_lr_hr_pair(const ImagePlane& hr, int scale, bool quantize_lr = true) {
  const auto r = static_cast<std::size_t>(scale);
  if (scale < 1 || hr.height < r || hr.width < r)
    throw std::invalid_argument("make_lr_hr_pair: image " + std::to_string(hr.height) + "x" +
                                std::to_string(hr.width) + " is smaller than scale " + std::to_string(scale));
  const std::size_t h = hr.height - hr.height % r, w = hr.width - hr.width % r;
  LrHrPair out;
  out.hr = hr.crop(0, 0, h, w);
  out.lr = bicubic_resize(out.hr, h / r, w / r);
  if (quantize_lr) out.lr = quantize(std::move(out.lr));
  return out;
}

/// Crops an RGB image to multiples of R.
inline ImageRgb modcrop(const ImageRgb& img, int scale) {
  const auto r = static_cast<std::size_t>(scale);
  const std::size_t h = img.height - img.height % r, w = img.width - img.width % r;
  ImageRgb out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(img.px(y, 0), 3 * w, out.px(y, 0));
  return out;
}

/// Combines a super-resolved luma plane with bicubic-upscaled chroma.
inline ImageRgb upscale_color(const ImageRgb& lr_rgb, const ImagePlane& sr_y, int scale) {
  const auto r = static_cast<std::size_t>(scale);
  if (sr_y.height != r * lr_rgb.height || sr_y.width != r * lr_rgb.width)
    throw std::invalid_argument("upscale_color: luma plane is not " + std::to_string(scale) + "x the input");
  auto ycc = rgb_to_ycbcr(lr_rgb);
  auto cb = bicubic_resize(ycc.cb, sr_y.height, sr_y.width);
  auto cr = bicubic_resize(ycc.cr, sr_y.height, sr_y.width);
  ImagePlane y = sr_y;
  for (auto& v : y.data) v = std::clamp(v, 0.f, 255.f);
  return ycbcr_to_rgb(y, cb, cr);
}

}  // namespace oasr
