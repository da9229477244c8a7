// Command-line front end: train, eval, sr, ablate, inspect.
//
// Exit codes: 0 success, 1 usage/config, 2 I/O, 3 numerical failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "oasr/oasr.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

struct CommonFlags {
  std::string config;
  std::optional<int> scale;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
  bool deterministic = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, CommonFlags& f, bool with_checkpoint) {
  app->add_option("--config", f.config, "key = value config file");
  app->add_option("--scale", f.scale, "upscaling factor (2, 3 or 4)");
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--out", f.out, "output directory");
  app->add_flag("--deterministic", f.deterministic, "single-threaded, fixed reduction order");
  app->add_option("--set", f.overrides, "extra key=value overrides")->take_all();
  if (with_checkpoint) app->add_option("--checkpoint", f.checkpoint, "checkpoint path");
}

oasr::RunConfig resolve(const CommonFlags& f) {
  oasr::RunConfig cfg;
  if (!f.config.empty()) cfg = oasr::load_run_config(f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw oasr::UsageError("--set expects key=value, got '" + kv + "'");
    oasr::set_option(cfg, oasr::detail::trim(kv.substr(0, eq)), oasr::detail::trim(kv.substr(eq + 1)));
  }
  if (f.scale) cfg.net.scale = *f.scale;
  if (f.seed) cfg.net.seed = *f.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (f.deterministic) cfg.deterministic = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orientation-aware single-image super-resolution"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, ablate_f;
  auto* train = app.add_subcommand("train", "train a network");
  add_common(train, train_f, true);

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint and the bicubic baseline");
  add_common(eval, eval_f, true);

  std::string sr_ckpt, sr_in, sr_out;
  auto* sr = app.add_subcommand("sr", "super-resolve one image");
  sr->add_option("--checkpoint", sr_ckpt, "checkpoint path")->required();
  sr->add_option("input", sr_in, "input PNG or PPM")->required();
  sr->add_option("--out", sr_out, "output image (.png or .ppm)")->required();

  auto* ablate = app.add_subcommand("ablate", "train and compare the nine ablation variants");
  add_common(ablate, ablate_f, false);

  std::string inspect_ckpt;
  auto* inspect = app.add_subcommand("inspect", "print a checkpoint header");
  inspect->add_option("--checkpoint,checkpoint", inspect_ckpt, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      oasr::RunConfig cfg = resolve(train_f);
      if (!train_f.checkpoint.empty()) cfg.checkpoint_path = train_f.checkpoint;
      const auto s = oasr::cmd_train(cfg, std::cout);
      std::cout << "trained " << s.steps << " steps, final loss " << s.last_loss << "\ncheckpoint " << s.checkpoint
                << "\n";
    } else if (*eval) {
      const oasr::RunConfig cfg = resolve(eval_f);
      std::optional<std::string> ck;
      if (!eval_f.checkpoint.empty()) ck = eval_f.checkpoint;
      const auto report = oasr::cmd_eval(cfg, ck, std::cout);
      if (!report.errors.empty()) return kIo;
    } else if (*sr) {
      oasr::cmd_sr(sr_ckpt, sr_in, sr_out);
    } else if (*ablate) {
      oasr::cmd_ablate(resolve(ablate_f), std::cout);
    } else if (*inspect) {
      std::cout << oasr::cmd_inspect(inspect_ckpt);
    }
  } catch (const oasr::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const oasr::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const oasr::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kIo;
  } catch (const oasr::ImageIoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
