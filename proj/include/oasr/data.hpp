#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "oasr/image.hpp"
#include "oasr/image_io.hpp"
#include "oasr/tensor.hpp"

namespace oasr {

enum class DatasetRole { kTrain, kTest };

struct DatasetManifest {
  std::string name;
  std::vector<std::string> paths;
  DatasetRole role = DatasetRole::kTest;
};

/// Plain text, one image path per line; '#' starts a comment. Relative paths
/// resolve against the manifest's directory.
inline DatasetManifest load_manifest(const std::string& path, DatasetRole role) {
  std::ifstream in(path);
  if (!in) throw ImageIoError("cannot open manifest " + path);
  const auto base = std::filesystem::path(path).parent_path();
  DatasetManifest m;
  m.name = std::filesystem::path(path).stem().string();
  m.role = role;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
    std::filesystem::path p(line);
    m.paths.push_back((p.is_absolute() ? p : base / p).lexically_normal().string());
  }
  if (m.paths.empty()) throw std::invalid_argument("manifest " + path + " lists no images");
  return m;
}

/// Throws if any image appears in both manifests.
inline void check_disjoint(const DatasetManifest& a, const DatasetManifest& b) {
  auto canon = [](const std::string& p) { return std::filesystem::weakly_canonical(p).string(); };
  std::set<std::string> seen;
  for (const auto& p : a.paths) seen.insert(canon(p));
  for (const auto& p : b.paths)
    if (seen.count(canon(p)))
      throw std::invalid_argument("image " + p + " appears in both " + a.name + " and " + b.name);
}

/// Luminance at 8-bit precision (rounded Y of the studio-swing transform).
inline ImagePlane luma_plane(const ImageRgb& img) { return quantize(rgb_to_ycbcr(img).y); }

struct AugmentFlags {
  bool rotate = false;
  bool flip = false;
  bool scale = false;

  static AugmentFlags all() { return {true, true, true}; }
  static AugmentFlags none() { return {}; }
};

/// Original plus each enabled augmentation applied singly.
inline std::vector<std::pair<std::string, ImagePlane>> expand_variants(const ImagePlane& img, AugmentFlags flags) {
  std::vector<std::pair<std::string, ImagePlane>> out;
  out.emplace_back("orig", img);
  if (flags.rotate)
    for (auto op : kRotations) out.emplace_back(to_string(op), augment(img, op));
  if (flags.flip) out.emplace_back(to_string(AugmentOp::kHFlip), augment(img, AugmentOp::kHFlip));
  if (flags.scale)
    for (auto op : kDownscales) out.emplace_back(to_string(op), augment(img, op));
  return out;
}

/// One augmented image ready for cropping.
struct PatchSource {
  std::string label;
  ImagePlane hr;  // dims divisible by the scale
  ImagePlane lr;  // bicubic-downscaled hr
};

/// Location of a patch: source index and top-left corner in LR pixels.
struct PatchDraw {
  std::size_t source = 0;
  std::size_t y = 0, x = 0;
};

struct SampleBatch {
  Tensor<float> lr;  // (B, 1, p, p)
  Tensor<float> hr;  // (B, 1, R*p, R*p)
  std::vector<PatchDraw> draws;
};

/// Deterministic stream of aligned (LR, HR) training patches. Each pool epoch
/// draws `patches_per_source` uniformly placed patches from every source and
/// shuffles them with a seed derived from (seed, epoch).
class PatchPool {
 public:
  PatchPool(const std::vector<std::pair<std::string, ImagePlane>>& images, int scale, std::size_t patch,
            AugmentFlags flags, std::uint64_t seed, std::size_t patches_per_source = 16, std::ostream* log = &std::cerr)
      : scale_(scale), patch_(patch), seed_(seed), per_source_(patches_per_source) {
    if (scale < 1 || patch < 1 || patches_per_source < 1) throw std::invalid_argument("PatchPool: bad geometry");
    for (const auto& [name, img] : images) {
      for (auto& [tag, variant] : expand_variants(img, flags)) {
        if (variant.height < patch * static_cast<std::size_t>(scale) ||
            variant.width < patch * static_cast<std::size_t>(scale)) {
          if (log)
            *log << "warning: skipping " << name << " [" << tag << "]: " << variant.height << "x" << variant.width
                 << " is smaller than a " << patch * static_cast<std::size_t>(scale) << "-pixel patch\n";
          continue;
        }
        auto pair = make_lr_hr_pair(variant, scale);
        sources_.push_back({name + ":" + tag, std::move(pair.hr), std::move(pair.lr)});
      }
    }
    if (sources_.empty()) throw std::invalid_argument("PatchPool: no image is large enough for the patch size");
    start_epoch(0);
  }

  static PatchPool from_manifest(const DatasetManifest& manifest, int scale, std::size_t patch, AugmentFlags flags,
                                 std::uint64_t seed, std::size_t patches_per_source = 16,
                                 std::ostream* log = &std::cerr) {
    std::vector<std::pair<std::string, ImagePlane>> images;
    for (const auto& p : manifest.paths) images.emplace_back(p, luma_plane(read_image(p)));
    return PatchPool(images, scale, patch, flags, seed, patches_per_source, log);
  }

  std::size_t source_count() const { return sources_.size(); }
  const PatchSource& source(std::size_t i) const { return sources_.at(i); }
  std::size_t epoch_length() const { return sources_.size() * per_source_; }
  std::size_t epoch() const { return epoch_; }
  int scale() const { return scale_; }
  std::size_t patch() const { return patch_; }

  PatchDraw next_draw() {
    if (cursor_ == order_.size()) start_epoch(epoch_ + 1);
    return order_[cursor_++];
  }

  /// Advances the stream by n samples without building patches.
  void skip(std::size_t n) {
    while (n--) next_draw();
  }

  SampleBatch next_batch(std::size_t batch) {
    const std::size_t p = patch_, hp = p * static_cast<std::size_t>(scale_);
    SampleBatch b{Tensor<float>(Shape{batch, 1, p, p}), Tensor<float>(Shape{batch, 1, hp, hp}), {}};
    for (std::size_t n = 0; n < batch; ++n) {
      const PatchDraw d = next_draw();
      const PatchSource& s = sources_[d.source];
      const std::size_t r = static_cast<std::size_t>(scale_);
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) b.lr.at(n, 0, y, x) = s.lr.at(d.y + y, d.x + x);
      for (std::size_t y = 0; y < hp; ++y)
        for (std::size_t x = 0; x < hp; ++x) b.hr.at(n, 0, y, x) = s.hr.at(r * d.y + y, r * d.x + x);
      b.draws.push_back(d);
    }
    return b;
  }

 private:
  void start_epoch(std::size_t epoch) {
    epoch_ = epoch;
    cursor_ = 0;
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    order_.clear();
    for (std::size_t i = 0; i < sources_.size(); ++i) {
      std::uniform_int_distribution<std::size_t> ys(0, sources_[i].lr.height - patch_);
      std::uniform_int_distribution<std::size_t> xs(0, sources_[i].lr.width - patch_);
      for (std::size_t k = 0; k < per_source_; ++k) {
        const std::size_t y = ys(rng);
        order_.push_back({i, y, xs(rng)});
      }
    }
    std::shuffle(order_.begin(), order_.end(), rng);
  }

  int scale_;
  std::size_t patch_;
  std::uint64_t seed_;
  std::size_t per_source_;
  std::vector<PatchSource> sources_;
  std::vector<PatchDraw> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// A full test image prepared for evaluation.
struct EvalImage {
  std::string path;
  ImageRgb rgb;  // cropped to multiples of the scale
  ImagePlane lr, hr;
};

struct EvalSet {
  std::string name;
  std::vector<EvalImage> images;
  std::vector<std::string> errors;  // one entry per file that failed to decode
};

inline EvalSet eval_set(const DatasetManifest& manifest, int scale) {
  EvalSet out{manifest.name, {}, {}};
  for (const auto& p : manifest.paths) {
    try {
      ImageRgb rgb = modcrop(read_image(p), scale);
      auto pair = make_lr_hr_pair(luma_plane(rgb), scale);
      out.images.push_back({p, std::move(rgb), std::move(pair.lr), std::move(pair.hr)});
    } catch (const std::exception& e) {
      out.errors.push_back(p + ": " + e.what());
    }
  }
  return out;
}

}  // namespace oasr
