#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "oasr/parameter.hpp"
#include "oasr/tensor.hpp"

namespace oasr {

/// Two-parameter weighted Huber loss: quadratic within `delta`, linear beyond,
/// scaled by `weight`.
struct LossConfig {
  double delta = 0.5;
  double weight = 1.0;

  void validate() const {
    if (!(delta > 0)) throw std::invalid_argument("loss delta must be > 0");
    if (!(weight > 0)) throw std::invalid_argument("loss weight must be > 0");
  }
};

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int halve_after_epochs = 50;
  int total_epochs = 60;
  double finetune_lr = 1e-5;

  void validate() const {
    if (!(lr > 0) || !(finetune_lr > 0)) throw std::invalid_argument("learning rates must be > 0");
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1))
      throw std::invalid_argument("Adam betas must lie in (0, 1)");
    if (!(epsilon > 0)) throw std::invalid_argument("Adam epsilon must be > 0");
    if (total_epochs < 1) throw std::invalid_argument("total_epochs must be >= 1");
  }
};

template <class T>
struct LossResult {
  double loss = 0;
  Tensor<T> grad;  // d(loss)/d(pred)
};

/// Mean over elements of weight * huber_delta(pred - gt).
template <class T>
LossResult<T> huber_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossConfig& cfg) {
  if (!(pred.shape() == gt.shape()))
    throw std::invalid_argument("huber_loss: prediction " + pred.shape().str() + " vs target " + gt.shape().str());
  const double n = static_cast<double>(pred.size());
  const double d = cfg.delta, w = cfg.weight;
  LossResult<T> out{0.0, Tensor<T>(pred.shape())};
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    const double a = std::abs(r);
    total += a <= d ? 0.5 * r * r : d * a - 0.5 * d * d;
    out.grad[i] = static_cast<T>(w * std::clamp(r, -d, d) / n);
  }
  out.loss = w * total / n;
  return out;
}

/// Constant finetune_lr when finetuning; otherwise lr, halved from
/// halve_after_epochs onward.
inline double lr_at(int epoch, const OptimizerConfig& opt, bool finetune) {
  if (epoch < 0 || epoch >= opt.total_epochs)
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(opt.total_epochs) + ")");
  if (finetune) return opt.finetune_lr;
  return epoch < opt.halve_after_epochs ? opt.lr : opt.lr / 2;
}

/// One bias-corrected Adam update at step t (1-based) using opt.lr; zeroes grads.
template <class T>
void adam_step(ParameterSet<T>& params, const OptimizerConfig& opt, long long t) {
  if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double m = opt.beta1 * p.adam_m[i] + (1.0 - opt.beta1) * g;
      const double v = opt.beta2 * p.adam_v[i] + (1.0 - opt.beta2) * g * g;
      p.adam_m[i] = static_cast<T>(m);
      p.adam_v[i] = static_cast<T>(v);
      p.value[i] = static_cast<T>(p.value[i] - opt.lr * (m / c1) / (std::sqrt(v / c2) + opt.epsilon));
    }
  }
  params.zero_grad();
}

}  // namespace oasr
