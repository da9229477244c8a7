#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "oasr/image.hpp"

namespace oasr {

namespace detail {
inline void check_pair(const ImagePlane& a, const ImagePlane& b, int shave, const char* what) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument(std::string(what) + ": image dimensions differ");
  if (shave < 0 || a.height <= 2 * static_cast<std::size_t>(shave) || a.width <= 2 * static_cast<std::size_t>(shave))
    throw std::invalid_argument(std::string(what) + ": border shave leaves no pixels");
}

inline ImagePlane shave_border(const ImagePlane& p, int shave) {
  const auto s = static_cast<std::size_t>(shave);
  return p.crop(s, s, p.height - 2 * s, p.width - 2 * s);
}
}  // namespace detail

/// 10 log10(255^2 / MSE) over the interior left after removing `shave` pixels
/// per side. Identical images give +infinity.
inline double psnr(const ImagePlane& a, const ImagePlane& b, int shave) {
  detail::check_pair(a, b, shave, "psnr");
  const auto s = static_cast<std::size_t>(shave);
  double se = 0;
  std::size_t count = 0;
  for (std::size_t y = s; y < a.height - s; ++y)
    for (std::size_t x = s; x < a.width - s; ++x) {
      const double d = static_cast<double>(a.at(y, x)) - static_cast<double>(b.at(y, x));
      se += d * d;
      ++count;
    }
  const double mse = se / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

struct SsimParams {
  static constexpr int kWindow = 11;
  static constexpr double kSigma = 1.5;
  static constexpr double kK1 = 0.01;
  static constexpr double kK2 = 0.03;
  static constexpr double kRange = 255.0;
};

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
inline std::array<double, SsimParams::kWindow> ssim_gaussian() {
  std::array<double, SsimParams::kWindow> g{};
  double total = 0;
  for (int i = 0; i < SsimParams::kWindow; ++i) {
    const double d = i - (SsimParams::kWindow - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * SsimParams::kSigma * SsimParams::kSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

/// Mean structural similarity over all fully-covered 11x11 windows of the
/// shaved images (Gaussian weights, sigma 1.5, K1 0.01, K2 0.03, range 255).
inline double ssim(const ImagePlane& a, const ImagePlane& b, int shave) {
  detail::check_pair(a, b, shave, "ssim");
  const ImagePlane pa = detail::shave_border(a, shave), pb = detail::shave_border(b, shave);
  constexpr std::size_t K = SsimParams::kWindow;
  const std::size_t H = pa.height, W = pa.width;
  if (H < K || W < K) throw std::invalid_argument("ssim: image smaller than the 11x11 window after shaving");
  const auto g = ssim_gaussian();
  const std::size_t oh = H - K + 1, ow = W - K + 1;

  // Horizontal then vertical pass for the five local moments.
  constexpr int kMoments = 5;
  std::vector<double> horiz(kMoments * H * ow, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      std::array<double, kMoments> acc{};
      for (std::size_t k = 0; k < K; ++k) {
        const double u = pa.at(y, x + k), v = pb.at(y, x + k), w = g[k];
        acc[0] += w * u;
        acc[1] += w * v;
        acc[2] += w * u * u;
        acc[3] += w * v * v;
        acc[4] += w * u * v;
      }
      for (int m = 0; m < kMoments; ++m) horiz[(m * H + y) * ow + x] = acc[m];
    }

  const double c1 = std::pow(SsimParams::kK1 * SsimParams::kRange, 2);
  const double c2 = std::pow(SsimParams::kK2 * SsimParams::kRange, 2);
  double total = 0;
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      std::array<double, kMoments> m{};
      for (std::size_t k = 0; k < K; ++k)
        for (int j = 0; j < kMoments; ++j) m[j] += g[k] * horiz[(j * H + y + k) * ow + x];
      const double mu_a = m[0], mu_b = m[1];
      const double var_a = m[2] - mu_a * mu_a, var_b = m[3] - mu_b * mu_b, cov = m[4] - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  return total / static_cast<double>(oh * ow);
}

}  // namespace oasr
