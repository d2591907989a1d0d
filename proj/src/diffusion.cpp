#include "meshdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "meshdiff/error.hpp"
#include "meshdiff/random.hpp"

namespace meshdiff {

NoiseSchedule cosine_schedule(int steps, double offset, double beta_clip) {
  if (steps < 1) throw ArgumentError("schedule needs at least one timestep");
  if (!(offset > 0)) throw ArgumentError("cosine offset must be positive");
  if (!(beta_clip > 0 && beta_clip < 1)) throw ArgumentError("beta_clip must be in (0, 1)");
  auto f = [&](double t) {
    const double c = std::cos((t / steps + offset) / (1 + offset) * std::numbers::pi / 2);
    return c * c;
  };
  const double f0 = f(0);
  NoiseSchedule s;
  s.steps = steps;
  s.offset = offset;
  s.beta_clip = beta_clip;
  s.betas.resize(static_cast<std::size_t>(steps));
  s.alpha_bars.resize(static_cast<std::size_t>(steps) + 1);
  s.alpha_bars[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double raw = 1.0 - (f(t) / f0) / (f(t - 1) / f0);
    s.betas[static_cast<std::size_t>(t - 1)] = std::clamp(raw, 1e-12, beta_clip);
  }
  for (int t = 1; t <= steps; ++t)
    s.alpha_bars[static_cast<std::size_t>(t)] = s.alpha_bars[static_cast<std::size_t>(t - 1)] * (1.0 - s.beta(t));
  return s;
}

double CategoricalDistribution::sum() const {
  double total = 0;
  for (double p : probs) total += p;
  return total;
}

void CategoricalDistribution::validate(double tolerance) const {
  for (double p : probs)
    if (!(p >= 0)) throw DomainError("negative or non-finite probability");
  if (!(std::abs(sum() - 1.0) <= tolerance)) throw DomainError("distribution does not sum to 1");
}

std::vector<double> TransitionSpec::materialize() const {
  std::vector<double> m(static_cast<std::size_t>(categories) * static_cast<std::size_t>(categories));
  for (int i = 0; i < categories; ++i)
    for (int j = 0; j < categories; ++j) m[static_cast<std::size_t>(i * categories + j)] = prob(i, j);
  return m;
}

namespace {

void check_category(int x, int categories, const char* what) {
  if (x < 0 || x >= categories) throw ArgumentError(std::string(what) + " category out of range");
}

void check_timestep(int t, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps)
    throw ArgumentError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(schedule.steps) + "]");
}

}  // namespace

CategoricalDistribution marginal_from_keep(int x0, double alpha_bar, int categories) {
  check_category(x0, categories, "x0");
  CategoricalDistribution d;
  d.probs.assign(static_cast<std::size_t>(categories), (1.0 - alpha_bar) / categories);
  d.probs[static_cast<std::size_t>(x0)] += alpha_bar;
  return d;
}

CategoricalDistribution q_marginal(int x0, int t, const NoiseSchedule& schedule, int categories) {
  check_timestep(t, schedule);
  return marginal_from_keep(x0, schedule.alpha_bar(t), categories);
}

QuantizedTriangleSoup sample_xt(const QuantizedTriangleSoup& soup, int t, const NoiseSchedule& schedule,
                                std::uint64_t seed) {
  check_timestep(t, schedule);
  soup.validate();
  const double keep = schedule.alpha_bar(t);
  const auto categories = static_cast<std::uint64_t>(soup.categories());
  const std::uint64_t key = derive_key(seed, {0x58544E4Fu});
  QuantizedTriangleSoup out = soup;
  for (std::size_t j = 0; j < out.faces.size(); ++j) {
    if (!out.mask[j]) continue;
    for (std::size_t s = 0; s < 9; ++s) {
      const std::uint64_t idx = j * 9 + s;
      if (to_unit(counter_bits(key, 2 * idx)) < keep) continue;
      // C is a power of two, so the modulo is unbiased.
      out.faces[j][s] = static_cast<std::uint16_t>(counter_bits(key, 2 * idx + 1) % categories);
    }
  }
  return out;
}

CategoricalDistribution posterior_closed_form(int xt, int x0, double keep_between, double alpha_bar_prev,
                                              int categories) {
  check_category(xt, categories, "xt");
  check_category(x0, categories, "x0");
  const double c = categories;
  const double alpha_bar_t = keep_between * alpha_bar_prev;
  const double norm = (xt == x0 ? alpha_bar_t : 0.0) + (1.0 - alpha_bar_t) / c;
  if (!(norm > 0)) throw Error("posterior normalizer vanished");
  CategoricalDistribution d;
  d.probs.resize(static_cast<std::size_t>(categories));
  for (int j = 0; j < categories; ++j) {
    const double forward = (j == xt ? keep_between : 0.0) + (1.0 - keep_between) / c;
    const double prior = (j == x0 ? alpha_bar_prev : 0.0) + (1.0 - alpha_bar_prev) / c;
    d.probs[static_cast<std::size_t>(j)] = forward * prior / norm;
  }
  return d;
}

CategoricalDistribution posterior(int xt, int x0, int t, const NoiseSchedule& schedule, int categories) {
  check_timestep(t, schedule);
  if (t == 1) {
    check_category(xt, categories, "xt");
    return marginal_from_keep(x0, 1.0, categories);
  }
  return posterior_closed_form(xt, x0, 1.0 - schedule.beta(t), schedule.alpha_bar(t - 1), categories);
}

CategoricalDistribution reverse_step_closed_form(int xt, std::span<const double> x0_logits, double keep_between,
                                                 double alpha_bar_prev) {
  const int categories = static_cast<int>(x0_logits.size());
  check_category(xt, categories, "xt");
  double peak = -INFINITY;
  for (double l : x0_logits) {
    if (!std::isfinite(l)) throw ArgumentError("non-finite logit");
    peak = std::max(peak, l);
  }
  std::vector<double> pi(x0_logits.size());
  double z = 0;
  for (std::size_t k = 0; k < pi.size(); ++k) z += pi[k] = std::exp(x0_logits[k] - peak);
  for (double& p : pi) p /= z;

  // sum_k pi_k q(j | xt, k) = F_j * [b * pi_j / N_j + (1 - b)/C * sum_k pi_k / N_k],
  // where F is the forward factor, b = alpha_bar_prev and N_k the normalizer.
  const double c = categories;
  const double alpha_bar_t = keep_between * alpha_bar_prev;
  const double norm_same = alpha_bar_t + (1.0 - alpha_bar_t) / c;
  const double norm_diff = (1.0 - alpha_bar_t) / c;
  double weighted = 0;
  for (int k = 0; k < categories; ++k) {
    const double n = k == xt ? norm_same : norm_diff;
    if (pi[static_cast<std::size_t>(k)] > 0) weighted += pi[static_cast<std::size_t>(k)] / n;
  }
  CategoricalDistribution d;
  d.probs.resize(pi.size());
  double total = 0;
  for (int j = 0; j < categories; ++j) {
    const double forward = (j == xt ? keep_between : 0.0) + (1.0 - keep_between) / c;
    const double n = j == xt ? norm_same : norm_diff;
    const double own = pi[static_cast<std::size_t>(j)] > 0 ? alpha_bar_prev * pi[static_cast<std::size_t>(j)] / n : 0.0;
    const double p = forward * (own + (1.0 - alpha_bar_prev) / c * weighted);
    d.probs[static_cast<std::size_t>(j)] = p;
    total += p;
  }
  for (double& p : d.probs) p /= total;
  return d;
}

CategoricalDistribution reverse_step_distribution(int xt, std::span<const double> x0_logits, int t,
                                                  const NoiseSchedule& schedule) {
  check_timestep(t, schedule);
  return reverse_step_closed_form(xt, x0_logits, 1.0 - schedule.beta(t), schedule.alpha_bar(t - 1));
}

CrossEntropy cross_entropy_loss(const LogitTensor& logits, const QuantizedTriangleSoup& target, LogitTensor* grad,
                                double scale) {
  if (logits.faces != target.max_faces() || logits.categories != target.categories() ||
      logits.values.size() != static_cast<std::size_t>(logits.faces) * 9 * static_cast<std::size_t>(logits.categories))
    throw ArgumentError("logit shape does not match the target soup");
  if (grad) *grad = LogitTensor(logits.faces, logits.categories);
  CrossEntropy ce;
  for (int j = 0; j < logits.faces; ++j) {
    if (!target.mask[static_cast<std::size_t>(j)]) continue;
    for (int s = 0; s < 9; ++s) {
      const auto row = logits.slot(j, s);
      const int y = target.faces[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)];
      double peak = -INFINITY;
      for (double l : row) peak = std::max(peak, l);
      double z = 0;
      for (double l : row) z += std::exp(l - peak);
      const double log_z = peak + std::log(z);
      ce.total += log_z - row[static_cast<std::size_t>(y)];
      ++ce.count;
      if (grad) {
        auto g = grad->slot(j, s);
        for (std::size_t c = 0; c < row.size(); ++c) g[c] = scale * std::exp(row[c] - log_z);
        g[static_cast<std::size_t>(y)] -= scale;
      }
    }
  }
  ce.mean = ce.count ? ce.total / static_cast<double>(ce.count) : 0.0;
  return ce;
}

double kl_divergence(const CategoricalDistribution& p, const CategoricalDistribution& q) {
  if (p.probs.size() != q.probs.size()) throw ArgumentError("distribution sizes differ");
  double kl = 0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    if (p.probs[i] <= 0) continue;
    kl += p.probs[i] * (std::log(p.probs[i]) - std::log(q.probs[i]));
  }
  return std::max(kl, 0.0);
}

VariationalBound variational_bound(const X0Predictor& model, const QuantizedTriangleSoup& soup,
                                   const NoiseSchedule& schedule, std::uint64_t seed, int timesteps) {
  soup.validate();
  const int categories = soup.categories();
  const int steps = schedule.steps;
  VariationalBound vb;

  const CategoricalDistribution uniform{std::vector<double>(static_cast<std::size_t>(categories), 1.0 / categories)};
  for (std::size_t j = 0; j < soup.faces.size(); ++j) {
    if (!soup.mask[j]) continue;
    for (std::uint16_t x0 : soup.faces[j]) vb.prior += kl_divergence(q_marginal(x0, steps, schedule, categories), uniform);
  }

  std::vector<int> visit;
  if (steps >= 2) {
    const int all = steps - 1;
    if (timesteps >= 1 && timesteps < all) {
      for (int i = 0; i < timesteps; ++i) visit.push_back(2 + static_cast<int>((static_cast<long long>(i) * all) / timesteps));
    } else {
      for (int t = 2; t <= steps; ++t) visit.push_back(t);
    }
    const double weight = static_cast<double>(all) / static_cast<double>(visit.size());
    for (int t : visit) {
      const QuantizedTriangleSoup xt = sample_xt(soup, t, schedule, derive_key(seed, {0x564Cu, static_cast<std::uint64_t>(t)}));
      const LogitTensor logits = model(xt, t);
      double term = 0;
      for (std::size_t j = 0; j < soup.faces.size(); ++j) {
        if (!soup.mask[j]) continue;
        for (int s = 0; s < 9; ++s) {
          const int x0 = soup.faces[j][static_cast<std::size_t>(s)];
          const int x_t = xt.faces[j][static_cast<std::size_t>(s)];
          term += kl_divergence(posterior(x_t, x0, t, schedule, categories),
                                reverse_step_distribution(x_t, logits.slot(static_cast<int>(j), s), t, schedule));
        }
      }
      vb.denoising += weight * term;
    }
  }

  const QuantizedTriangleSoup x1 = sample_xt(soup, 1, schedule, derive_key(seed, {0x564Cu, 1u}));
  const LogitTensor logits = model(x1, 1);
  vb.reconstruction = cross_entropy_loss(logits, soup).total;
  return vb;
}

}  // namespace meshdiff
