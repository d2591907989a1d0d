#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "meshdiff/mesh.hpp"

namespace meshdiff {

/// Uniform-transition noise schedule. beta(t) and alpha_bar(t) use the
/// 1-based timestep convention; alpha_bar(0) == 1.
struct NoiseSchedule {
  int steps = 0;
  double offset = 0.008;
  double beta_clip = 0.999;
  std::vector<double> betas;       // betas[t - 1] = beta_t
  std::vector<double> alpha_bars;  // alpha_bars[t], size steps + 1

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t)); }
};

constexpr int kDefaultTimesteps = 1000;

/// Cosine schedule: alpha_bar(t) = f(t) / f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2),
/// with betas clipped to beta_clip and alpha_bar recomputed from the clipped betas.
NoiseSchedule cosine_schedule(int steps = kDefaultTimesteps, double offset = 0.008, double beta_clip = 0.999);

struct CategoricalDistribution {
  std::vector<double> probs;

  double sum() const;
  /// Throws DomainError on negative entries or a sum off by more than `tolerance`.
  void validate(double tolerance = 1e-9) const;
};

/// One uniform transition step Q = (1 - beta) I + (beta / C) 11^T. Applied in
/// closed form; materialize() exists for oracles.
struct TransitionSpec {
  double beta = 0;
  int categories = 0;

  double prob(int from, int to) const { return (from == to ? 1.0 - beta : 0.0) + beta / categories; }
  std::vector<double> materialize() const;  // row-major C x C
};

/// q(x_t | x_0) = alpha_bar * onehot(x0) + (1 - alpha_bar) / C.
CategoricalDistribution marginal_from_keep(int x0, double alpha_bar, int categories);
CategoricalDistribution q_marginal(int x0, int t, const NoiseSchedule& schedule, int categories);

/// Noises every unmasked coordinate independently: kept with probability
/// alpha_bar(t), otherwise redrawn uniformly. Each coordinate's draw depends
/// only on (seed, face slot, coordinate slot).
QuantizedTriangleSoup sample_xt(const QuantizedTriangleSoup& soup, int t, const NoiseSchedule& schedule,
                                std::uint64_t seed);

/// q(x_s | x_t, x_0) for s < t, in terms of the keep probability of the
/// s -> t transition (alpha_bar_t / alpha_bar_s) and alpha_bar_s.
CategoricalDistribution posterior_closed_form(int xt, int x0, double keep_between, double alpha_bar_prev,
                                              int categories);

/// q(x_{t-1} | x_t, x_0). At t == 1 this is the point mass at x0.
CategoricalDistribution posterior(int xt, int x0, int t, const NoiseSchedule& schedule, int categories);

/// x0-parameterized reverse step sum_k softmax(logits)[k] * q(x_s | x_t, k),
/// computed in O(C). `keep_between` and `alpha_bar_prev` as in posterior_closed_form.
CategoricalDistribution reverse_step_closed_form(int xt, std::span<const double> x0_logits, double keep_between,
                                                 double alpha_bar_prev);

/// Reverse step from t to t - 1.
CategoricalDistribution reverse_step_distribution(int xt, std::span<const double> x0_logits, int t,
                                                  const NoiseSchedule& schedule);

/// Logits for every face slot: faces x 9 coordinate slots x categories.
struct LogitTensor {
  int faces = 0;
  int categories = 0;
  std::vector<double> values;

  LogitTensor() = default;
  LogitTensor(int faces, int categories)
      : faces(faces), categories(categories),
        values(static_cast<std::size_t>(faces) * 9 * static_cast<std::size_t>(categories), 0.0) {}

  std::span<double> slot(int face, int coord) {
    return {values.data() + (static_cast<std::size_t>(face) * 9 + static_cast<std::size_t>(coord)) * categories,
            static_cast<std::size_t>(categories)};
  }
  std::span<const double> slot(int face, int coord) const {
    return {values.data() + (static_cast<std::size_t>(face) * 9 + static_cast<std::size_t>(coord)) * categories,
            static_cast<std::size_t>(categories)};
  }
};

struct CrossEntropy {
  double total = 0;       // nats summed over unmasked coordinates
  double mean = 0;        // per coordinate
  std::size_t count = 0;  // unmasked coordinates
};

/// Cross-entropy of the logits against the clean soup over unmasked faces.
/// When `grad` is non-null it receives scale * (softmax - onehot) on unmasked
/// slots and zero elsewhere.
CrossEntropy cross_entropy_loss(const LogitTensor& logits, const QuantizedTriangleSoup& target,
                                LogitTensor* grad = nullptr, double scale = 1.0);

/// Maps a noised soup and timestep to x0 logits.
using X0Predictor = std::function<LogitTensor(const QuantizedTriangleSoup& noised, int t)>;

struct VariationalBound {
  double prior = 0;
  double denoising = 0;
  double reconstruction = 0;
  double total() const { return prior + denoising + reconstruction; }
};

/// Monte-Carlo estimate of the variational bound (nats, summed over unmasked
/// coordinates). One x_t draw per visited timestep; when `timesteps` is in
/// [1, T-1) the denoising sum is estimated from that many evenly spaced t and
/// rescaled, otherwise all t in [2, T] are visited.
VariationalBound variational_bound(const X0Predictor& model, const QuantizedTriangleSoup& soup,
                                   const NoiseSchedule& schedule, std::uint64_t seed, int timesteps = 0);

double kl_divergence(const CategoricalDistribution& p, const CategoricalDistribution& q);

}  // namespace meshdiff
