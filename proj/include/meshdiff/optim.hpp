#pragma once

#include <span>

#include "meshdiff/denoiser.hpp"

namespace meshdiff {

struct OptimizerConfig {
  double base_lr = 5e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long warmup_steps = 0;
  long total_steps = 1;

  void validate() const;
};

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
/// at total_steps.
double lr_at(long step, const OptimizerConfig& opt);

struct AdamState {
  DenoiserParams m, v;
  static AdamState zeros(const DenoiserConfig& config);
};

/// One decoupled-weight-decay Adam update on flat arrays.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  const OptimizerConfig& opt, long step, double lr);

/// Applies adamw_update tensor by tensor.
void adamw_step(DenoiserParams& params, const DenoiserParams& grads, AdamState& state, const OptimizerConfig& opt,
                long step, double lr);

}  // namespace meshdiff
