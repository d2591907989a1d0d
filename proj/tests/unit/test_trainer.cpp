#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "meshdiff/error.hpp"
#include "meshdiff/trainer.hpp"

using namespace meshdiff;

namespace {

DenoiserConfig tiny_model() {
  DenoiserConfig m;
  m.embed_dim = 4;
  m.face_dim = 16;
  m.depth = 2;
  m.heads = 2;
  return m;
}

TrainConfig tiny_train(int threads = 1) {
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 3;
  tc.checkpoint_every = 2;
  tc.seed = 99;
  tc.threads = threads;
  return tc;
}

}  // namespace

TEST_CASE("train config arithmetic") {
  TrainConfig tc;
  tc.batch_size = 3;
  tc.epochs = 5;
  CHECK(tc.steps_per_epoch(4) == 2);
  CHECK(tc.total_steps(4) == 10);
  tc.max_steps = 7;
  CHECK(tc.total_steps(4) == 7);
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ArgumentError);
}

TEST_CASE("initial checkpoint takes shape and schedule from the data") {
  const DatasetFile data = testutil::tiny_dataset();
  const Checkpoint c = initial_checkpoint(data, tiny_model(), ScheduleConfig{50}, OptimizerConfig{}, tiny_train());
  CHECK(c.model.categories == 16);
  CHECK(c.model.max_faces == 20);
  CHECK(c.model.class_count == 4);
  CHECK(c.step == 0);
  CHECK(c.optimizer.total_steps == 12);
  CHECK(c.optimizer.warmup_steps == 1);
  CHECK(c.class_names == data.class_names);
}

TEST_CASE("training batches reshuffle per epoch and cover every record") {
  const DatasetFile data = testutil::tiny_dataset();
  TrainConfig tc = tiny_train();
  tc.batch_size = 2;
  tc.augment = false;
  for (long epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen;
    for (long s = 1; s <= 2; ++s)
      for (const auto& soup : training_batch(data, tc, epoch * 2 + s)) seen.push_back(soup.class_label);
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<int>{0, 1, 2, 3});
  }
  CHECK(training_batch(data, tc, 3) == training_batch(data, tc, 3));
  tc.augment = true;
  const auto aug = training_batch(data, tc, 1);
  for (const auto& soup : aug) CHECK_NOTHROW(soup.validate());
}

TEST_CASE("training is deterministic, thread invariant and resumable") {
  const DatasetFile data = testutil::tiny_dataset();
  const Checkpoint start = initial_checkpoint(data, tiny_model(), ScheduleConfig{50}, OptimizerConfig{}, tiny_train());

  std::vector<Checkpoint> periodic;
  TrainCallbacks cb;
  cb.on_checkpoint = [&](const Checkpoint& c) { periodic.push_back(c); };
  const TrainResult a = train(data, start, tiny_train(), cb);
  const TrainResult b = train(data, start, tiny_train());
  const TrainResult c = train(data, start, tiny_train(3));
  REQUIRE_FALSE(a.diverged);
  CHECK(a.trace.size() == 12);
  for (const auto& s : a.trace) CHECK(std::isfinite(s.loss));
  const auto bytes = serialize_checkpoint(a.checkpoint);
  CHECK(serialize_checkpoint(b.checkpoint) == bytes);
  CHECK(serialize_checkpoint(c.checkpoint) == bytes);

  // epochs 2, 4, 6 and the final one
  REQUIRE(periodic.size() >= 3);
  CHECK(periodic[0].step == 4);
  CHECK(periodic[0].epoch == 2);
  const TrainResult resumed = train(data, periodic[0], tiny_train());
  CHECK(serialize_checkpoint(resumed.checkpoint) == bytes);
  REQUIRE(resumed.trace.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(resumed.trace[i].step == a.trace[i + 4].step);
    CHECK(resumed.trace[i].loss == a.trace[i + 4].loss);
  }

  TrainConfig other = tiny_train();
  other.seed = 100;
  CHECK(serialize_checkpoint(train(data, start, other).checkpoint) != bytes);
}

TEST_CASE("loss decreases on a tiny overfit run") {
  const DatasetFile data = testutil::tiny_dataset();
  TrainConfig tc;
  tc.epochs = 300;
  tc.batch_size = 4;
  tc.augment = false;
  tc.seed = 5;
  OptimizerConfig opt;
  opt.weight_decay = 0;
  const Checkpoint start = initial_checkpoint(data, tiny_model(), ScheduleConfig{50}, opt, tc);
  const TrainResult r = train(data, start, tc);
  double head = 0, tail = 0;
  for (int i = 0; i < 50; ++i) {
    head += r.trace[static_cast<std::size_t>(i)].loss;
    tail += r.trace[r.trace.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  CHECK(tail < 0.75 * head);
}

TEST_CASE("divergence keeps the last good checkpoint") {
  const DatasetFile data = testutil::tiny_dataset();
  TrainConfig tc = tiny_train();
  OptimizerConfig opt;
  opt.base_lr = 1e300;
  Checkpoint start = initial_checkpoint(data, tiny_model(), ScheduleConfig{50}, opt, tc);
  const TrainResult r = train(data, start, tc);
  CHECK(r.diverged);
  CHECK_FALSE(r.error.empty());
  CHECK(r.checkpoint.params.all_finite());
  CHECK(r.checkpoint.step < 12);
}
