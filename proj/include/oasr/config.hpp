#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace oasr {

/// Residual block used inside each stacked module.
enum class BlockDesign : std::uint8_t {
  kStandard = 0,     // conv3x3 -> relu -> conv3x3, plus skip
  kTriple3x3 = 1,    // three parallel 3x3 convs, fused
  kOrientation = 2,  // parallel 3x3, 5x1 and 1x5 convs, fused
};

/// Which channel-attention gates are active.
enum class FusionMode : std::uint8_t {
  kNoAttention = 0,  // neither local nor global gate
  kLocalOnly = 1,    // gate inside each block only
  kLocalGlobal = 2,  // gate inside each block and over the stacked features
};

/// Where a gate sits relative to the relu + squeeze conv of a fusion step.
enum class GatePlacement : std::uint8_t {
  kAfterReluConv = 0,
  kBetween = 1,
  kBeforeReluConv = 2,
};

inline constexpr std::array<BlockDesign, 3> kAllBlockDesigns{BlockDesign::kStandard, BlockDesign::kTriple3x3,
                                                             BlockDesign::kOrientation};
inline constexpr std::array<FusionMode, 3> kAllFusionModes{FusionMode::kNoAttention, FusionMode::kLocalOnly,
                                                           FusionMode::kLocalGlobal};
inline constexpr std::array<GatePlacement, 3> kAllPlacements{GatePlacement::kAfterReluConv, GatePlacement::kBetween,
                                                             GatePlacement::kBeforeReluConv};

inline std::string_view to_string(BlockDesign d) {
  switch (d) {
    case BlockDesign::kStandard: return "standard";
    case BlockDesign::kTriple3x3: return "triple3x3";
    case BlockDesign::kOrientation: return "orientation";
  }
  return "?";
}

inline std::string_view to_string(FusionMode f) {
  switch (f) {
    case FusionMode::kNoAttention: return "none";
    case FusionMode::kLocalOnly: return "local";
    case FusionMode::kLocalGlobal: return "local_global";
  }
  return "?";
}

inline std::string_view to_string(GatePlacement p) {
  switch (p) {
    case GatePlacement::kAfterReluConv: return "after_relu_conv";
    case GatePlacement::kBetween: return "between";
    case GatePlacement::kBeforeReluConv: return "before_relu_conv";
  }
  return "?";
}

namespace detail {
template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& all, const char* what) {
  for (E e : all)
    if (to_string(e) == s) return e;
  throw std::invalid_argument(std::string("unknown ") + what + ": '" + std::string(s) + "'");
}
}  // namespace detail

inline BlockDesign parse_block_design(std::string_view s) {
  if (s == "A" || s == "a") return BlockDesign::kStandard;
  if (s == "B" || s == "b") return BlockDesign::kTriple3x3;
  if (s == "C" || s == "c") return BlockDesign::kOrientation;
  return detail::parse_enum(s, kAllBlockDesigns, "block_design");
}

inline FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "A" || s == "a") return FusionMode::kNoAttention;
  if (s == "B" || s == "b") return FusionMode::kLocalOnly;
  if (s == "C" || s == "c") return FusionMode::kLocalGlobal;
  return detail::parse_enum(s, kAllFusionModes, "fusion_mode");
}

inline GatePlacement parse_placement(std::string_view s) {
  if (s == "a") return GatePlacement::kAfterReluConv;
  if (s == "b") return GatePlacement::kBetween;
  if (s == "c") return GatePlacement::kBeforeReluConv;
  return detail::parse_enum(s, kAllPlacements, "ca_placement");
}

/// Architecture of one network. Defaults are the light-weight profile.
struct NetworkConfig {
  int scale = 2;
  int oam_count = 10;
  int width = 64;
  int ca_reduction = 16;
  BlockDesign block_design = BlockDesign::kOrientation;
  FusionMode fusion_mode = FusionMode::kLocalGlobal;
  GatePlacement ca_placement = GatePlacement::kBeforeReluConv;
  std::uint64_t seed = 0;

  bool local_gate() const {
    return block_design != BlockDesign::kStandard && fusion_mode != FusionMode::kNoAttention;
  }
  bool global_gate() const { return fusion_mode == FusionMode::kLocalGlobal; }

  /// Channels seen by the in-block gate: the concatenation, or the squeezed
  /// output when the gate follows the squeeze conv.
  int local_gate_channels() const { return ca_placement == GatePlacement::kAfterReluConv ? width : 3 * width; }
  int global_gate_channels() const {
    return ca_placement == GatePlacement::kAfterReluConv ? width : oam_count * width;
  }

  void validate() const {
    if (scale < 2 || scale > 4) throw std::invalid_argument("scale must be 2, 3 or 4");
    if (oam_count < 1) throw std::invalid_argument("oam_count must be >= 1");
    if (width < 8) throw std::invalid_argument("width must be >= 8");
    if (ca_reduction < 1) throw std::invalid_argument("ca_reduction must be >= 1");
    auto check = [&](bool active, int ch, const char* which) {
      if (active && ch % ca_reduction != 0)
        throw std::invalid_argument(std::string(which) + " gate width " + std::to_string(ch) +
                                    " is not divisible by ca_reduction " + std::to_string(ca_reduction));
    };
    check(local_gate(), local_gate_channels(), "local");
    check(global_gate(), global_gate_channels(), "global");
  }

  /// True when the two configs describe the same network body (all but scale and seed).
  bool same_body(const NetworkConfig& o) const {
    return oam_count == o.oam_count && width == o.width && ca_reduction == o.ca_reduction &&
           block_design == o.block_design && fusion_mode == o.fusion_mode && ca_placement == o.ca_placement;
  }

  bool operator==(const NetworkConfig&) const = default;
};

/// Light-weight profile: 10 blocks of width 64.
inline NetworkConfig light_profile(int scale = 2) {
  NetworkConfig c;
  c.scale = scale;
  return c;
}

/// Enhanced profile with 64 blocks. Constructible and runnable, but training
/// it at the intended scale needs far more compute than a CPU build provides.
inline NetworkConfig enhanced_profile(int scale = 2) {
  NetworkConfig c = light_profile(scale);
  c.oam_count = 64;
  return c;
}

}  // namespace oasr
