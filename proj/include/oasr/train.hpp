#pragma once

#include <stdexcept>

#include "oasr/data.hpp"
#include "oasr/graph.hpp"
#include "oasr/model.hpp"
#include "oasr/optim.hpp"

namespace oasr {

/// Forward on the batch, loss against the HR patches, backward, one Adam
/// update at step `step` with opt.lr. Returns the pre-update loss.
template <class T>
double train_step(const Tensor<T>& lr, const Tensor<T>& hr, ParameterSet<T>& params, const NetworkConfig& cfg,
                  const LossConfig& loss_cfg, const OptimizerConfig& opt, long long step) {
  const Shape& ls = lr.shape();
  const Shape& hs = hr.shape();
  const auto r = static_cast<std::size_t>(cfg.scale);
  if (ls.rank() != 4 || hs.rank() != 4 || ls.n() != hs.n() || hs.h() != r * ls.h() || hs.w() != r * ls.w())
    throw std::invalid_argument("train_step: HR batch " + hs.str() + " is not " + std::to_string(r) +
                                "x the LR batch " + ls.str());
  GradTape<T> tape;
  Bound<GradTape<T>> bound(tape, params, &params);
  Var out = network_forward(tape, cfg, bound, tape.input(lr));
  auto loss = huber_loss(tape.value(out), hr, loss_cfg);
  tape.backward(out, loss.grad);
  adam_step(params, opt, step);
  return loss.loss;
}

inline double train_step(const SampleBatch& batch, ParameterSet<float>& params, const NetworkConfig& cfg,
                         const LossConfig& loss_cfg, const OptimizerConfig& opt, long long step) {
  return train_step(batch.lr, batch.hr, params, cfg, loss_cfg, opt, step);
}

}  // namespace oasr
