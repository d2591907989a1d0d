#include "meshdiff/optim.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "meshdiff/error.hpp"

namespace meshdiff {

void OptimizerConfig::validate() const {
  if (!(base_lr > 0) || !std::isfinite(base_lr)) throw ArgumentError("learning rate must be positive");
  if (!(weight_decay >= 0)) throw ArgumentError("weight decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ArgumentError("betas must be in [0, 1)");
  if (!(eps > 0)) throw ArgumentError("eps must be positive");
  if (total_steps < 1) throw ArgumentError("total_steps must be positive");
  if (warmup_steps < 0 || warmup_steps >= total_steps) throw ArgumentError("warmup_steps must be in [0, total_steps)");
}

double lr_at(long step, const OptimizerConfig& opt) {
  if (step < 0 || step > opt.total_steps) throw ArgumentError("step outside [0, total_steps]");
  if (step < opt.warmup_steps) return opt.base_lr * static_cast<double>(step) / static_cast<double>(opt.warmup_steps);
  const double progress =
      static_cast<double>(step - opt.warmup_steps) / static_cast<double>(opt.total_steps - opt.warmup_steps);
  return 0.5 * opt.base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamState AdamState::zeros(const DenoiserConfig& config) {
  return {DenoiserParams::zeros(config), DenoiserParams::zeros(config)};
}

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  const OptimizerConfig& opt, long step, double lr) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw ArgumentError("optimizer buffers differ in size");
  if (step < 1) throw ArgumentError("optimizer step is 1-based");
  for (double g : grad)
    if (!std::isfinite(g)) throw DivergenceError(0, "non-finite gradient");
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * grad[i];
    v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
    param[i] -= lr * opt.weight_decay * param[i];
    param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps);
  }
}

void adamw_step(DenoiserParams& params, const DenoiserParams& grads, AdamState& state, const OptimizerConfig& opt,
                long step, double lr) {
  std::vector<const Matrix*> g;
  std::vector<Matrix*> m, v;
  grads.for_each([&](const std::string&, const Matrix& x, bool) { g.push_back(&x); });
  state.m.for_each([&](const std::string&, Matrix& x, bool) { m.push_back(&x); });
  state.v.for_each([&](const std::string&, Matrix& x, bool) { v.push_back(&x); });
  std::size_t i = 0;
  params.for_each([&](const std::string& name, Matrix& p, bool) {
    if (i >= g.size() || g[i]->size() != p.size() || m[i]->size() != p.size() || v[i]->size() != p.size())
      throw ArgumentError("optimizer state does not match parameter " + name);
    auto span_of = [](Matrix& x) { return std::span<double>(x.data(), static_cast<std::size_t>(x.size())); };
    adamw_update(span_of(p), {g[i]->data(), static_cast<std::size_t>(g[i]->size())}, span_of(*m[i]), span_of(*v[i]),
                 opt, step, lr);
    ++i;
  });
}

}  // namespace meshdiff
