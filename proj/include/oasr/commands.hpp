#pragma once

// Command implementations behind the CLI: train, eval, sr, ablate, inspect.

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "oasr/checkpoint.hpp"
#include "oasr/data.hpp"
#include "oasr/image.hpp"
#include "oasr/image_io.hpp"
#include "oasr/metrics.hpp"
#include "oasr/model.hpp"
#include "oasr/optim.hpp"
#include "oasr/run_config.hpp"
#include "oasr/train.hpp"

namespace oasr {

struct TrainSummary {
  std::string checkpoint;
  std::string loss_csv;
  std::uint64_t steps = 0;
  double first_loss = std::numeric_limits<double>::quiet_NaN();
  double last_loss = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string epoch_checkpoint_name(const std::string& dir, std::uint64_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "/epoch_%04llu.oasr", static_cast<unsigned long long>(epoch));
  return dir + buf;
}

inline std::string fmt(double v, int precision = 9) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

}  // namespace detail

/// Runs the training loop described by `cfg`. Writes <output_dir>/config.txt,
/// <output_dir>/loss.csv (step,epoch,lr,loss), per-epoch checkpoints (last
/// keep_last retained) and the final checkpoint.
inline TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  if (cfg.train_manifest.empty()) throw UsageError("train: train_manifest is not set");
  const auto manifest = load_manifest(cfg.train_manifest, DatasetRole::kTrain);
  for (const auto& m : cfg.eval_manifests) check_disjoint(manifest, load_manifest(m, DatasetRole::kTest));

  Checkpoint ck;
  ck.config = cfg.net;
  bool finetune = false;
  TrainPosition pos;
  if (!cfg.resume_from.empty()) {
    Checkpoint prev = load_checkpoint(cfg.resume_from);
    if (!(prev.config == cfg.net)) throw UsageError("resume_from: checkpoint network differs from the configured one");
    if (!prev.position) throw UsageError("resume_from: checkpoint carries no training state");
    ck.params = std::move(prev.params);
    pos = *prev.position;
  } else if (!cfg.init_from.empty()) {
    Checkpoint src = load_checkpoint(cfg.init_from);
    if (!src.config.same_body(cfg.net))
      throw UsageError("init_from: checkpoint body (blocks=" + std::to_string(src.config.oam_count) +
                       ", width=" + std::to_string(src.config.width) + ") does not match the configured network");
    ck.params = load_from_scale2(src.params, src.config, cfg.net, cfg.net.seed);
    finetune = true;
  } else {
    ck.params = init_weights<float>(cfg.net, cfg.net.seed);
  }

  // Everything that can fail on input is checked before any output is written.
  PatchPool pool = PatchPool::from_manifest(manifest, cfg.net.scale, cfg.patch_size, cfg.augment, cfg.net.seed,
                                            cfg.patches_per_source, &log);
  const std::size_t steps_per_epoch =
      cfg.steps_per_epoch ? cfg.steps_per_epoch : std::max<std::size_t>(1, pool.epoch_length() / cfg.batch_size);
  pool.skip(static_cast<std::size_t>(pos.step) * cfg.batch_size);

  std::filesystem::create_directories(cfg.output_dir);
  {
    std::ofstream echo(cfg.output_dir + "/config.txt");
    echo << echo_config(cfg);
  }
  TrainSummary summary;
  summary.loss_csv = cfg.output_dir + "/loss.csv";
  std::ofstream csv(summary.loss_csv, pos.step ? std::ios::app : std::ios::trunc);
  if (!csv) throw ImageIoError("cannot open " + summary.loss_csv);
  if (!pos.step) csv << "step,epoch,lr,loss\n";

  std::deque<std::string> kept;
  log << "training " << param_count(cfg.net) << " parameters, " << pool.source_count() << " patch sources, "
      << steps_per_epoch << " steps/epoch\n";
  bool capped = false;
  for (std::uint64_t epoch = pos.epoch; epoch < static_cast<std::uint64_t>(cfg.opt.total_epochs) && !capped; ++epoch) {
    OptimizerConfig opt = cfg.opt;
    opt.lr = lr_at(static_cast<int>(epoch), cfg.opt, finetune);
    const std::uint64_t epoch_start = epoch * steps_per_epoch;
    for (std::uint64_t s = pos.step - std::min(pos.step, epoch_start); s < steps_per_epoch; ++s) {
      if (cfg.max_steps && pos.step >= cfg.max_steps) {
        capped = true;
        break;
      }
      const SampleBatch batch = pool.next_batch(cfg.batch_size);
      const double loss = train_step(batch, ck.params, cfg.net, cfg.loss, opt, static_cast<long long>(pos.step + 1));
      if (!std::isfinite(loss))
        throw NumericalError("non-finite loss at step " + std::to_string(pos.step + 1) + " (epoch " +
                             std::to_string(epoch) + ", lr " + detail::fmt(opt.lr) + ")");
      ++pos.step;
      ++summary.steps;
      if (std::isnan(summary.first_loss)) summary.first_loss = loss;
      summary.last_loss = loss;
      csv << pos.step << "," << epoch << "," << detail::fmt(opt.lr, 6) << "," << detail::fmt(loss) << "\n";
      if (cfg.flush_every && pos.step % cfg.flush_every == 0) csv.flush();
    }
    if (capped) break;
    pos.epoch = epoch + 1;
    ck.position = pos;
    const std::string path = detail::epoch_checkpoint_name(cfg.output_dir, pos.epoch);
    save_checkpoint(path, ck);
    kept.push_back(path);
    while (cfg.keep_last && kept.size() > cfg.keep_last) {
      std::filesystem::remove(kept.front());
      kept.pop_front();
    }
    log << "epoch " << epoch << " done, step " << pos.step << ", loss " << detail::fmt(summary.last_loss, 6) << "\n";
  }
  csv.flush();
  ck.position = pos;
  summary.checkpoint = cfg.final_checkpoint();
  if (auto parent = std::filesystem::path(summary.checkpoint).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  save_checkpoint(summary.checkpoint, ck);
  return summary;
}

/// Network output for one luminance plane, rounded to integer levels.
inline ImagePlane super_resolve(const NetworkConfig& cfg, const ParameterSet<float>& params, const ImagePlane& lr) {
  return quantize(to_plane(infer(cfg, params, to_tensor(lr))));
}

inline ImagePlane bicubic_upscale(const ImagePlane& lr, int scale) {
  const auto r = static_cast<std::size_t>(scale);
  return quantize(bicubic_resize(lr, r * lr.height, r * lr.width));
}

struct QualityScore {
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
};

/// PSNR/SSIM on Y with the scale-factor border shave.
inline QualityScore score(const ImagePlane& sr, const ImagePlane& hr, int scale) {
  return {psnr(sr, hr, scale), ssim(sr, hr, scale)};
}

struct EvalRow {
  std::string dataset, image;
  QualityScore bicubic, network;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> errors;

  /// Mean over rows of one dataset ("" for all rows).
  std::pair<QualityScore, QualityScore> mean(const std::string& dataset = "") const {
    QualityScore b{0, 0}, n{0, 0};
    std::size_t count = 0;
    for (const auto& r : rows) {
      if (!dataset.empty() && r.dataset != dataset) continue;
      b.psnr += r.bicubic.psnr;
      b.ssim += r.bicubic.ssim;
      n.psnr += r.network.psnr;
      n.ssim += r.network.ssim;
      ++count;
    }
    const double c = static_cast<double>(count);
    return {{b.psnr / c, b.ssim / c}, {n.psnr / c, n.ssim / c}};
  }
};

/// Evaluates the bicubic baseline and, when a checkpoint is given, the network
/// on every image of the eval manifests. The checkpoint file is only read.
inline EvalReport cmd_eval(const RunConfig& cfg, const std::optional<std::string>& checkpoint, std::ostream& log) {
  if (cfg.eval_manifests.empty()) throw UsageError("eval: eval_manifests is not set");
  std::optional<Checkpoint> ck;
  if (checkpoint) {
    ck = load_checkpoint(*checkpoint);
    if (ck->config.scale != cfg.net.scale)
      throw UsageError("eval: checkpoint is x" + std::to_string(ck->config.scale) + " but x" +
                       std::to_string(cfg.net.scale) + " was requested");
  }
  EvalReport report;
  for (const auto& path : cfg.eval_manifests) {
    const EvalSet set = eval_set(load_manifest(path, DatasetRole::kTest), cfg.net.scale);
    for (const auto& e : set.errors) {
      log << "error: " << e << "\n";
      report.errors.push_back(e);
    }
    for (const auto& img : set.images) {
      EvalRow row{set.name, std::filesystem::path(img.path).filename().string(), {}, {}};
      row.bicubic = score(bicubic_upscale(img.lr, cfg.net.scale), img.hr, cfg.net.scale);
      if (ck) row.network = score(super_resolve(ck->config, ck->params, img.lr), img.hr, cfg.net.scale);
      report.rows.push_back(row);
    }
  }

  std::ostringstream table;
  table << "dataset,image,bicubic_psnr,bicubic_ssim,network_psnr,network_ssim\n";
  auto line = [&](const std::string& d, const std::string& i, const QualityScore& b, const QualityScore& n) {
    table << d << "," << i << "," << std::fixed << std::setprecision(4) << b.psnr << "," << b.ssim << ","
          << n.psnr << "," << n.ssim << "\n";
    table.unsetf(std::ios::fixed);
  };
  std::vector<std::string> datasets;
  for (const auto& r : report.rows) {
    line(r.dataset, r.image, r.bicubic, r.network);
    if (datasets.empty() || datasets.back() != r.dataset) datasets.push_back(r.dataset);
  }
  for (const auto& d : datasets) {
    auto [b, n] = report.mean(d);
    line(d, "MEAN", b, n);
  }
  log << table.str();
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    std::ofstream(cfg.output_dir + "/eval.csv") << table.str();
  }
  return report;
}

/// Super-resolves an RGB image: luma through the network, chroma bicubic.
inline void cmd_sr(const std::string& checkpoint, const std::string& image_in, const std::string& image_out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const ImageRgb rgb = read_image(image_in);
  const ImagePlane sr_y = super_resolve(ck.config, ck.params, luma_plane(rgb));
  write_image(image_out, upscale_color(rgb, sr_y, ck.config.scale));
}

inline std::string cmd_inspect(const std::string& checkpoint) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto& c = ck.config;
  std::ostringstream o;
  o << "format        OASR v" << Checkpoint::kVersion << "\n"
    << "scale         " << c.scale << "\n"
    << "oam_count     " << c.oam_count << "\n"
    << "width         " << c.width << "\n"
    << "ca_reduction  " << c.ca_reduction << "\n"
    << "block_design  " << to_string(c.block_design) << "\n"
    << "fusion_mode   " << to_string(c.fusion_mode) << "\n"
    << "ca_placement  " << to_string(c.ca_placement) << "\n"
    << "seed          " << c.seed << "\n"
    << "io_range      raw [0,255]\n"
    << "tensors       " << ck.params.size() << "\n"
    << "parameters    " << ck.params.scalar_count() << "\n";
  if (ck.position) o << "trained_steps " << ck.position->step << "\n" << "epochs        " << ck.position->epoch << "\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Ablation driver.

struct AblationRow {
  std::string group;    // blocks | fusion | placement
  std::string variant;  // a | b | c within the group
  NetworkConfig net;
  std::uint64_t config_hash = 0;
  std::size_t params = 0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  QualityScore quality;
};

/// The nine variants: residual-block designs (without attention), fusion
/// experiments (orientation blocks), and gate placements (both gates).
inline std::vector<AblationRow> ablation_plan(const NetworkConfig& base) {
  std::vector<AblationRow> rows;
  const char* labels[] = {"a", "b", "c"};
  auto push = [&](const char* group, int i, NetworkConfig n) {
    AblationRow r;
    r.group = group;
    r.variant = labels[i];
    r.net = n;
    std::ostringstream key;
    key << group << "/" << labels[i] << "/" << n.scale << "/" << n.oam_count << "/" << n.width << "/"
        << n.ca_reduction << "/" << to_string(n.block_design) << "/" << to_string(n.fusion_mode) << "/"
        << to_string(n.ca_placement) << "/" << n.seed;
    r.config_hash = fnv1a(key.str());
    r.params = param_count(n);
    rows.push_back(r);
  };
  for (int i = 0; i < 3; ++i) {
    NetworkConfig n = base;
    n.block_design = kAllBlockDesigns[i];
    n.fusion_mode = FusionMode::kNoAttention;
    push("blocks", i, n);
  }
  for (int i = 0; i < 3; ++i) {
    NetworkConfig n = base;
    n.block_design = BlockDesign::kOrientation;
    n.fusion_mode = kAllFusionModes[i];
    n.ca_placement = GatePlacement::kBeforeReluConv;
    push("fusion", i, n);
  }
  for (int i = 0; i < 3; ++i) {
    NetworkConfig n = base;
    n.block_design = BlockDesign::kOrientation;
    n.fusion_mode = FusionMode::kLocalGlobal;
    n.ca_placement = kAllPlacements[i];
    push("placement", i, n);
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream o;
  o << "group,variant,block_design,fusion_mode,ca_placement,config_hash,param_count,final_loss,psnr,ssim\n";
  for (const auto& r : rows) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.config_hash));
    o << r.group << "," << r.variant << "," << to_string(r.net.block_design) << "," << to_string(r.net.fusion_mode)
      << "," << to_string(r.net.ca_placement) << "," << hash << "," << r.params << "," << detail::fmt(r.final_loss)
      << "," << std::fixed << std::setprecision(4) << r.quality.psnr << "," << r.quality.ssim << "\n";
    o.unsetf(std::ios::fixed);
    o << std::setprecision(6);
  }
  return o.str();
}

/// Trains and evaluates every ablation variant at the base config's budget and
/// writes <output_dir>/ablation.csv. Variants are evaluated on the eval
/// manifests, or on the training images when none are configured.
inline std::vector<AblationRow> cmd_ablate(const RunConfig& base, std::ostream& log) {
  base.validate();
  auto rows = ablation_plan(base.net);
  for (auto& row : rows) {
    RunConfig cfg = base;
    cfg.net = row.net;
    cfg.output_dir = base.output_dir + "/" + row.group + "_" + row.variant;
    cfg.checkpoint_path.clear();
    cfg.init_from.clear();
    cfg.resume_from.clear();
    log << "== ablation " << row.group << "/" << row.variant << " (" << to_string(row.net.block_design) << ", "
        << to_string(row.net.fusion_mode) << ", " << to_string(row.net.ca_placement) << ")\n";
    const TrainSummary t = cmd_train(cfg, log);
    row.final_loss = t.last_loss;
    if (cfg.eval_manifests.empty()) cfg.eval_manifests = {cfg.train_manifest};
    std::ostringstream quiet;
    const EvalReport rep = cmd_eval(cfg, t.checkpoint, quiet);
    row.quality = rep.mean().second;
  }
  std::filesystem::create_directories(base.output_dir);
  const std::string csv = ablation_csv(rows);
  std::ofstream(base.output_dir + "/ablation.csv") << csv;
  log << csv;
  return rows;
}

}  // namespace oasr
