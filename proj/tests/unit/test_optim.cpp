#include <doctest.h>

#include <cmath>
#include <vector>

#include "meshdiff/error.hpp"
#include "meshdiff/optim.hpp"

using namespace meshdiff;

namespace {

OptimizerConfig schedule(long warmup, long total) {
  OptimizerConfig o;
  o.warmup_steps = warmup;
  o.total_steps = total;
  return o;
}

}  // namespace

TEST_CASE("lr_at endpoints and midpoint") {
  const OptimizerConfig o = schedule(100, 1100);
  CHECK(o.base_lr == 5e-4);
  CHECK(lr_at(0, o) == 0.0);
  CHECK(lr_at(50, o) == doctest::Approx(2.5e-4));
  CHECK(lr_at(100, o) == doctest::Approx(5e-4));
  CHECK(lr_at(600, o) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK(std::abs(lr_at(1100, o)) < 1e-18);
  const OptimizerConfig none = schedule(0, 10);
  CHECK(lr_at(0, none) == doctest::Approx(5e-4));
  CHECK(lr_at(5, none) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(-1, o), ArgumentError);
  CHECK_THROWS_AS(lr_at(1101, o), ArgumentError);
}

TEST_CASE("lr_at is continuous and non-increasing after warmup") {
  const OptimizerConfig o = schedule(200, 5000);
  const double left = lr_at(199, o), at = lr_at(200, o), right = lr_at(201, o);
  CHECK(std::abs(at - left) <= o.base_lr / 200 + 1e-15);
  CHECK(std::abs(right - at) <= o.base_lr / 200);
  for (long s = 1; s <= 200; ++s) CHECK(lr_at(s, o) > lr_at(s - 1, o));
  for (long s = 201; s <= 5000; ++s) CHECK(lr_at(s, o) <= lr_at(s - 1, o));
}

TEST_CASE("optimizer config validation") {
  CHECK_NOTHROW(schedule(0, 1).validate());
  CHECK_THROWS_AS(schedule(5, 5).validate(), ArgumentError);
  CHECK_THROWS_AS(schedule(-1, 5).validate(), ArgumentError);
  OptimizerConfig bad = schedule(0, 5);
  bad.base_lr = 0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("adamw pure decay") {
  OptimizerConfig o = schedule(0, 10);
  o.weight_decay = 0.1;
  std::vector<double> w{1.0, -2.0, 3.5}, g(3, 0.0), m(3, 0.0), v(3, 0.0);
  adamw_update(w, g, m, v, o, 1, 0.01);
  CHECK(w[0] == doctest::Approx(1.0 * (1 - 0.001)).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(-2.0 * (1 - 0.001)).epsilon(1e-15));
  CHECK(w[2] == doctest::Approx(3.5 * (1 - 0.001)).epsilon(1e-15));
}

TEST_CASE("adamw scalar update by hand") {
  OptimizerConfig o = schedule(0, 10);
  o.weight_decay = 0;
  std::vector<double> w{1.0}, g{1.0}, m{0.0}, v{0.0};
  adamw_update(w, g, m, v, o, 1, 0.1);
  // m_hat = 1, v_hat = 1, so the step is 0.1 / (1 + 1e-8).
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(std::abs(w[0] - 0.9) < 1e-8);
  CHECK(m[0] == doctest::Approx(0.1));
  CHECK(v[0] == doctest::Approx(0.001));

  // Second step against a hand-evaluated oracle.
  g[0] = -0.5;
  adamw_update(w, g, m, v, o, 2, 0.1);
  const double m2 = 0.9 * 0.1 + 0.1 * -0.5, v2 = 0.999 * 0.001 + 0.001 * 0.25;
  const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adamw errors") {
  const OptimizerConfig o = schedule(0, 10);
  std::vector<double> w{1.0}, g{NAN}, m{0.0}, v{0.0};
  CHECK_THROWS_AS(adamw_update(w, g, m, v, o, 1, 0.1), DivergenceError);
  g[0] = 1;
  CHECK_THROWS_AS(adamw_update(w, g, m, v, o, 0, 0.1), ArgumentError);
  std::vector<double> g2{1.0, 2.0};
  CHECK_THROWS_AS(adamw_update(w, g2, m, v, o, 1, 0.1), ArgumentError);
}

TEST_CASE("identical tensors with identical grads stay identical") {
  DenoiserConfig cfg;
  cfg.embed_dim = 4;
  cfg.face_dim = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.max_faces = 3;
  cfg.categories = 8;
  DenoiserParams p = DenoiserParams::initialize(cfg, 1);
  p.blocks[1].fc1_w = p.blocks[0].fc1_w;
  DenoiserParams g = DenoiserParams::initialize(cfg, 2);
  g.blocks[1].fc1_w = g.blocks[0].fc1_w;
  AdamState state = AdamState::zeros(cfg);
  const OptimizerConfig o = schedule(0, 10);
  for (long s = 1; s <= 5; ++s) adamw_step(p, g, state, o, s, lr_at(s, o));
  CHECK(p.blocks[1].fc1_w == p.blocks[0].fc1_w);
  CHECK(state.m.blocks[1].fc1_w == state.m.blocks[0].fc1_w);
  CHECK(state.v.blocks[1].fc1_w == state.v.blocks[0].fc1_w);
}
