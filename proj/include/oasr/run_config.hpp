#pragma once

// Run configuration: plain-text "key = value" lines with '#' comments.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oasr/config.hpp"
#include "oasr/data.hpp"
#include "oasr/optim.hpp"

namespace oasr {

/// Bad configuration or command-line usage (exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or similar numerical breakdown (exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  NetworkConfig net;
  LossConfig loss;
  OptimizerConfig opt;

  std::size_t batch_size = 64;
  std::size_t patch_size = 48;          // LR patch side; HR side is scale * patch_size
  std::size_t patches_per_source = 16;  // patches drawn per augmented image per pool epoch
  AugmentFlags augment = AugmentFlags::all();
  std::size_t steps_per_epoch = 0;      // 0: one pass over the pool per epoch
  std::size_t max_steps = 0;            // 0: no cap
  std::size_t keep_last = 3;
  std::size_t flush_every = 100;
  bool deterministic = false;

  std::string train_manifest;
  std::vector<std::string> eval_manifests;
  std::string output_dir = "run";
  std::string checkpoint_path;  // final checkpoint; defaults to <output_dir>/final.oasr
  std::string init_from;        // scale-2 checkpoint to warm-start from
  std::string resume_from;      // own checkpoint with training state

  std::string final_checkpoint() const {
    return checkpoint_path.empty() ? output_dir + "/final.oasr" : checkpoint_path;
  }

  void validate() const {
    try {
      net.validate();
      loss.validate();
      opt.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (batch_size < 1 || patch_size < 1 || patches_per_source < 1)
      throw UsageError("batch_size, patch_size and patches_per_source must be >= 1");
    if (!init_from.empty() && !resume_from.empty()) throw UsageError("init_from and resume_from are exclusive");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

inline bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw UsageError("expected a boolean, got '" + v + "'");
}

inline AugmentFlags parse_augment(const std::string& v) {
  if (v == "all") return AugmentFlags::all();
  if (v == "none") return AugmentFlags::none();
  AugmentFlags f;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "rotate") f.rotate = true;
    else if (item == "flip") f.flip = true;
    else if (item == "scale") f.scale = true;
    else throw UsageError("unknown augmentation '" + item + "'");
  }
  return f;
}

inline std::string augment_string(const AugmentFlags& f) {
  if (f.rotate && f.flip && f.scale) return "all";
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ",";
    s += name;
  };
  add(f.rotate, "rotate");
  add(f.flip, "flip");
  add(f.scale, "scale");
  return s.empty() ? "none" : s;
}

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace detail

/// Applies one key/value pair. Unknown keys are a usage error.
inline void set_option(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  auto to_int = [&] {
    try {
      return std::stoi(value);
    } catch (...) {
      throw UsageError(key + ": expected an integer, got '" + value + "'");
    }
  };
  auto to_size = [&] {
    try {
      return static_cast<std::size_t>(std::stoull(value));
    } catch (...) {
      throw UsageError(key + ": expected a non-negative integer, got '" + value + "'");
    }
  };
  auto to_double = [&] {
    try {
      return std::stod(value);
    } catch (...) {
      throw UsageError(key + ": expected a number, got '" + value + "'");
    }
  };
  try {
    if (key == "profile") {
      if (value == "light") c.net.oam_count = 10, c.net.width = 64;
      else if (value == "enhanced") c.net.oam_count = 64, c.net.width = 64;
      else throw UsageError("profile must be light or enhanced");
    } else if (key == "scale") c.net.scale = to_int();
    else if (key == "oam_count") c.net.oam_count = to_int();
    else if (key == "width") c.net.width = to_int();
    else if (key == "ca_reduction") c.net.ca_reduction = to_int();
    else if (key == "block_design") c.net.block_design = parse_block_design(value);
    else if (key == "fusion_mode") c.net.fusion_mode = parse_fusion_mode(value);
    else if (key == "ca_placement") c.net.ca_placement = parse_placement(value);
    else if (key == "seed") c.net.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "loss_delta") c.loss.delta = to_double();
    else if (key == "loss_weight") c.loss.weight = to_double();
    else if (key == "lr") c.opt.lr = to_double();
    else if (key == "beta1") c.opt.beta1 = to_double();
    else if (key == "beta2") c.opt.beta2 = to_double();
    else if (key == "epsilon") c.opt.epsilon = to_double();
    else if (key == "halve_after_epochs") c.opt.halve_after_epochs = to_int();
    else if (key == "total_epochs") c.opt.total_epochs = to_int();
    else if (key == "finetune_lr") c.opt.finetune_lr = to_double();
    else if (key == "batch_size") c.batch_size = to_size();
    else if (key == "patch_size") c.patch_size = to_size();
    else if (key == "patches_per_source") c.patches_per_source = to_size();
    else if (key == "augment") c.augment = detail::parse_augment(value);
    else if (key == "steps_per_epoch") c.steps_per_epoch = to_size();
    else if (key == "max_steps") c.max_steps = to_size();
    else if (key == "keep_last") c.keep_last = to_size();
    else if (key == "flush_every") c.flush_every = to_size();
    else if (key == "deterministic") c.deterministic = parse_bool(value);
    else if (key == "train_manifest") c.train_manifest = value;
    else if (key == "eval_manifests") {
      c.eval_manifests.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ','))
        if (auto t = detail::trim(item); !t.empty()) c.eval_manifests.push_back(t);
    } else if (key == "output_dir") c.output_dir = value;
    else if (key == "checkpoint_path") c.checkpoint_path = value;
    else if (key == "init_from") c.init_from = value;
    else if (key == "resume_from") c.resume_from = value;
    else throw UsageError("unknown config key '" + key + "'");
  } catch (const std::invalid_argument& e) {
    throw UsageError(key + ": " + e.what());
  }
}

inline RunConfig parse_run_config(std::istream& in, RunConfig base = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    set_option(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline RunConfig load_run_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  return parse_run_config(in, std::move(base));
}

/// Effective configuration in the same "key = value" syntax the parser reads.
inline std::string echo_config(const RunConfig& c) {
  std::ostringstream o;
  auto kv = [&](const char* k, const auto& v) { o << k << " = " << v << "\n"; };
  using detail::format_double;
  kv("scale", c.net.scale);
  kv("oam_count", c.net.oam_count);
  kv("width", c.net.width);
  kv("ca_reduction", c.net.ca_reduction);
  kv("block_design", to_string(c.net.block_design));
  kv("fusion_mode", to_string(c.net.fusion_mode));
  kv("ca_placement", to_string(c.net.ca_placement));
  kv("seed", c.net.seed);
  kv("loss_delta", format_double(c.loss.delta));
  kv("loss_weight", format_double(c.loss.weight));
  kv("lr", format_double(c.opt.lr));
  kv("beta1", format_double(c.opt.beta1));
  kv("beta2", format_double(c.opt.beta2));
  kv("epsilon", format_double(c.opt.epsilon));
  kv("halve_after_epochs", c.opt.halve_after_epochs);
  kv("total_epochs", c.opt.total_epochs);
  kv("finetune_lr", format_double(c.opt.finetune_lr));
  kv("batch_size", c.batch_size);
  kv("patch_size", c.patch_size);
  kv("patches_per_source", c.patches_per_source);
  kv("augment", detail::augment_string(c.augment));
  kv("steps_per_epoch", c.steps_per_epoch);
  kv("max_steps", c.max_steps);
  kv("keep_last", c.keep_last);
  kv("flush_every", c.flush_every);
  kv("deterministic", c.deterministic ? "true" : "false");
  kv("train_manifest", c.train_manifest);
  std::string evals;
  for (const auto& e : c.eval_manifests) evals += (evals.empty() ? "" : ",") + e;
  kv("eval_manifests", evals);
  kv("output_dir", c.output_dir);
  kv("checkpoint_path", c.checkpoint_path);
  kv("init_from", c.init_from);
  kv("resume_from", c.resume_from);
  return o.str();
}

/// 64-bit FNV-1a, stable across platforms and runs.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace oasr
