#pragma once

// The super-resolution network: an entry conv, a stack of orientation-aware
// residual blocks with in-block channel attention, attention-weighted fusion
// of all block outputs, a global skip, and a two-conv + pixel-shuffle head.
//
// Model code is written once against an executor (GradTape or Eager) so the
// same graph serves training, inference, and the 64-bit gradient checks.

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "oasr/config.hpp"
#include "oasr/graph.hpp"
#include "oasr/parameter.hpp"
#include "oasr/tensor.hpp"

namespace oasr {

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;  // 0 for biases
};

namespace detail {

inline void conv_spec(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t cout, std::size_t cin,
                      std::size_t kh, std::size_t kw) {
  out.push_back({prefix + ".weight", Shape{cout, cin, kh, kw}, cin * kh * kw});
  out.push_back({prefix + ".bias", Shape{cout}, 0});
}

inline void fc_spec(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t dout, std::size_t din) {
  out.push_back({prefix + ".weight", Shape{dout, din}, din});
  out.push_back({prefix + ".bias", Shape{dout}, 0});
}

inline void gate_spec(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t channels,
                      std::size_t reduction) {
  fc_spec(out, prefix + ".fc1", channels / reduction, channels);
  fc_spec(out, prefix + ".fc2", channels, channels / reduction);
}

inline std::string block_prefix(std::size_t i) { return "oam." + std::to_string(i); }

// Feature-extraction convs of a block, in concatenation order.
inline std::vector<std::string> branch_names(BlockDesign d) {
  switch (d) {
    case BlockDesign::kStandard: return {"conv_a", "conv_b"};
    case BlockDesign::kTriple3x3: return {"conv3x3_0", "conv3x3_1", "conv3x3_2"};
    case BlockDesign::kOrientation: return {"conv5x1", "conv1x5", "conv3x3"};
  }
  return {};
}

inline std::pair<std::size_t, std::size_t> branch_kernel(const std::string& name) {
  if (name == "conv5x1") return {5, 1};
  if (name == "conv1x5") return {1, 5};
  return {3, 3};
}

}  // namespace detail

/// Every learnable tensor of the network, in a fixed order.
inline std::vector<ParamSpec> parameter_layout(const NetworkConfig& cfg) {
  cfg.validate();
  using detail::conv_spec;
  const auto C = static_cast<std::size_t>(cfg.width);
  const auto N = static_cast<std::size_t>(cfg.oam_count);
  const auto R = static_cast<std::size_t>(cfg.scale);
  const auto s = static_cast<std::size_t>(cfg.ca_reduction);
  std::vector<ParamSpec> out;

  conv_spec(out, "entry.conv3x3", C, 1, 3, 3);
  for (std::size_t i = 0; i < N; ++i) {
    const std::string p = detail::block_prefix(i);
    for (const auto& b : detail::branch_names(cfg.block_design)) {
      auto [kh, kw] = detail::branch_kernel(b);
      conv_spec(out, p + "." + b, C, C, kh, kw);
    }
    if (cfg.block_design == BlockDesign::kStandard) continue;
    if (cfg.local_gate()) detail::gate_spec(out, p + ".lca", static_cast<std::size_t>(cfg.local_gate_channels()), s);
    conv_spec(out, p + ".fuse", C, 3 * C, 3, 3);
  }
  if (cfg.global_gate()) detail::gate_spec(out, "gca", static_cast<std::size_t>(cfg.global_gate_channels()), s);
  conv_spec(out, "gca.compress", C, N * C, 1, 1);
  conv_spec(out, "tail.conv1", C, C, 3, 3);
  conv_spec(out, "tail.conv2", R * R, C, 3, 3);
  return out;
}

/// Exact number of learnable scalars.
inline std::size_t param_count(const NetworkConfig& cfg) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(cfg)) n += p.shape.numel();
  return n;
}

/// Weight scalars (no biases) of the feature-extraction convs of one block.
inline std::size_t block_branch_weight_count(const NetworkConfig& cfg) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(cfg)) {
    if (p.fan_in == 0 || p.name.rfind("oam.0.", 0) != 0) continue;
    for (const auto& b : detail::branch_names(cfg.block_design))
      if (p.name == "oam.0." + b + ".weight") n += p.shape.numel();
  }
  return n;
}

/// He-normal weights (std sqrt(2 / fan_in)), zero biases, deterministic in seed.
template <class T = float>
ParameterSet<T> init_weights(const NetworkConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet<T> params;
  for (const auto& spec : parameter_layout(cfg)) {
    Tensor<T> t(spec.shape);
    if (spec.fan_in > 0) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(spec.fan_in)));
      for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    }
    params.add(spec.name, std::move(t));
  }
  return params;
}

/// Warm start for another scale: copies every body tensor and re-initialises the
/// R*R-channel output conv for the target scale.
template <class T>
ParameterSet<T> load_from_scale2(const ParameterSet<T>& source, const NetworkConfig& source_cfg,
                                 const NetworkConfig& target_cfg, std::uint64_t seed) {
  if (!source_cfg.same_body(target_cfg))
    throw std::invalid_argument("load_from_scale2: source and target networks differ in more than the scale");
  ParameterSet<T> out = init_weights<T>(target_cfg, seed);
  for (auto& p : out) {
    if (!source.contains(p.name))
      throw std::invalid_argument("load_from_scale2: source lacks parameter " + p.name);
    const auto& src = source.at(p.name);
    if (src.value.shape() == p.value.shape()) {
      p.value = src.value;
    } else if (p.name.rfind("tail.conv2.", 0) != 0) {
      throw std::invalid_argument("load_from_scale2: shape mismatch for " + p.name);
    }
  }
  return out;
}

/// Gate vectors observed during a forward pass, in evaluation order.
template <class T>
struct GateTrace {
  std::vector<Tensor<T>> alphas;
};

/// Resolves parameter names to executor handles.
template <class Exec>
class Bound {
 public:
  using T = typename Exec::Scalar;
  using H = typename Exec::Handle;

  /// With `grads` set, backward passes accumulate into grads->at(name).grad.
  Bound(Exec& ex, const ParameterSet<T>& params, ParameterSet<T>* grads = nullptr) : params_(params) {
    handles_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      handles_.push_back(ex.parameter(params[i].value, grads ? &(*grads)[i].grad : nullptr));
  }

  const H& operator()(const std::string& name) const { return handles_.at(params_.index_of(name)); }
  bool has(const std::string& name) const { return params_.contains(name); }

 private:
  const ParameterSet<T>& params_;
  std::vector<H> handles_;
};

template <class Exec>
typename Exec::Handle conv(Exec& ex, const Bound<Exec>& p, const std::string& prefix,
                           const typename Exec::Handle& x) {
  return ex.conv2d(x, p(prefix + ".weight"), p(prefix + ".bias"));
}

/// alpha = sigmoid(fc2(relu(fc1(avgpool(features))))), one row per batch sample.
template <class Exec>
typename Exec::Handle ca_gate(Exec& ex, const Bound<Exec>& p, const std::string& prefix,
                              const typename Exec::Handle& features, GateTrace<typename Exec::Scalar>* trace = nullptr) {
  auto z = ex.global_avg_pool(features);
  auto hidden = ex.relu(ex.fully_connected(z, p(prefix + ".fc1.weight"), p(prefix + ".fc1.bias")));
  auto alpha = ex.sigmoid(ex.fully_connected(hidden, p(prefix + ".fc2.weight"), p(prefix + ".fc2.bias")));
  if (trace) trace->alphas.push_back(ex.value(alpha));
  return alpha;
}

/// relu + squeeze conv over concatenated features, with an optional gate at the
/// configured position.
template <class Exec>
typename Exec::Handle gated_fusion(Exec& ex, const Bound<Exec>& p, const typename Exec::Handle& features,
                                   const std::string& gate_prefix, bool gated, GatePlacement placement,
                                   const std::string& conv_prefix, GateTrace<typename Exec::Scalar>* trace) {
  auto apply_gate = [&](const typename Exec::Handle& f) {
    return ex.channel_scale(f, ca_gate(ex, p, gate_prefix, f, trace));
  };
  if (!gated) return conv(ex, p, conv_prefix, ex.relu(features));
  switch (placement) {
    case GatePlacement::kBeforeReluConv: return conv(ex, p, conv_prefix, ex.relu(apply_gate(features)));
    case GatePlacement::kBetween: return conv(ex, p, conv_prefix, apply_gate(ex.relu(features)));
    case GatePlacement::kAfterReluConv: return apply_gate(conv(ex, p, conv_prefix, ex.relu(features)));
  }
  throw std::logic_error("unhandled gate placement");
}

/// One residual block: x + branch(x). Shape is preserved.
template <class Exec>
typename Exec::Handle oam_forward(Exec& ex, const NetworkConfig& cfg, const Bound<Exec>& p, std::size_t index,
                                  const typename Exec::Handle& x, GateTrace<typename Exec::Scalar>* trace = nullptr) {
  const std::string prefix = detail::block_prefix(index);
  if (ex.value(x).shape().c() != static_cast<std::size_t>(cfg.width))
    throw std::invalid_argument("oam_forward: input has " + std::to_string(ex.value(x).shape().c()) +
                                " channels, block expects " + std::to_string(cfg.width));
  if (cfg.block_design == BlockDesign::kStandard) {
    auto h = ex.relu(conv(ex, p, prefix + ".conv_a", x));
    return ex.add(x, conv(ex, p, prefix + ".conv_b", h));
  }
  std::vector<typename Exec::Handle> branches;
  for (const auto& b : detail::branch_names(cfg.block_design)) branches.push_back(conv(ex, p, prefix + "." + b, x));
  auto fused = gated_fusion(ex, p, ex.concat(branches), prefix + ".lca", cfg.local_gate(), cfg.ca_placement,
                            prefix + ".fuse", trace);
  return ex.add(x, fused);
}

/// Full network on a (B, 1, H, W) batch of luminance planes -> (B, 1, R*H, R*W).
template <class Exec>
typename Exec::Handle network_forward(Exec& ex, const NetworkConfig& cfg, const Bound<Exec>& p,
                                      const typename Exec::Handle& input,
                                      GateTrace<typename Exec::Scalar>* trace = nullptr) {
  const Shape& s = ex.value(input).shape();
  if (s.rank() != 4 || s.c() != 1)
    throw std::invalid_argument("network_forward: expected (B,1,H,W) input, got " + s.str());
  const std::size_t min_extent = cfg.block_design == BlockDesign::kOrientation ? 5 : 3;
  if (s.h() < min_extent || s.w() < min_extent)
    throw std::invalid_argument("network_forward: input " + s.str() + " is smaller than the " +
                                std::to_string(min_extent) + "-pixel kernel extent");

  auto f0 = conv(ex, p, "entry.conv3x3", input);
  std::vector<typename Exec::Handle> stages;
  auto f = f0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.oam_count); ++i) {
    f = oam_forward(ex, cfg, p, i, f, trace);
    stages.push_back(f);
  }
  f = typename Exec::Handle{};
  auto hierarchical = ex.concat(stages);
  stages.clear();
  auto fused = gated_fusion(ex, p, hierarchical, "gca", cfg.global_gate(), cfg.ca_placement, "gca.compress", trace);
  hierarchical = typename Exec::Handle{};
  auto out = ex.add(f0, fused);
  auto head = conv(ex, p, "tail.conv2", conv(ex, p, "tail.conv1", out));
  return ex.pixel_shuffle(head, static_cast<std::size_t>(cfg.scale));
}

/// Inference on a (B, 1, H, W) tensor without recording a tape.
template <class T>
Tensor<T> infer(const NetworkConfig& cfg, const ParameterSet<T>& params, Tensor<T> input,
                GateTrace<T>* trace = nullptr) {
  Eager<T> ex;
  Bound<Eager<T>> bound(ex, params);
  return *network_forward(ex, cfg, bound, ex.input(std::move(input)), trace);
}

}  // namespace oasr
