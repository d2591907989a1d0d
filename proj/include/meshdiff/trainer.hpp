#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "meshdiff/checkpoint.hpp"
#include "meshdiff/preprocess.hpp"

namespace meshdiff {

struct TrainConfig {
  int epochs = 2000;
  int batch_size = 8;
  long max_steps = 0;  // 0 = run all epochs
  double warmup_fraction = 0.1;
  int checkpoint_every = 100;  // epochs; 0 = final checkpoint only
  bool augment = true;
  ScaleRange scale_range;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  long steps_per_epoch(std::size_t records) const;
  long total_steps(std::size_t records) const;
};

nlohmann::json to_json(const TrainConfig& c);

struct TrainStep {
  long step = 0;
  long epoch = 0;
  double loss = 0;
  double lr = 0;
};

struct TrainCallbacks {
  std::function<void(const TrainStep&)> on_step;
  /// Called with every periodic checkpoint and the final one.
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  Checkpoint checkpoint;  // last good state
  std::vector<TrainStep> trace;
  bool diverged = false;
  std::string error;
};

/// Fresh checkpoint at step 0: model shape taken from the dataset, optimizer
/// step counts from the training config.
Checkpoint initial_checkpoint(const DatasetFile& train_set, DenoiserConfig model, const ScheduleConfig& schedule,
                              OptimizerConfig optimizer, const TrainConfig& config);

/// Trains from `start` (step 0 or a resumed checkpoint) until the configured
/// end. Every random draw is a function of (seed, step, example), so a resumed
/// run continues exactly as an unbroken one, independent of `threads`.
TrainResult train(const DatasetFile& train_set, Checkpoint start, const TrainConfig& config,
                  const TrainCallbacks& callbacks = {});

/// The batch seen at a given 1-based step, after shuffling and augmentation.
std::vector<QuantizedTriangleSoup> training_batch(const DatasetFile& train_set, const TrainConfig& config, long step);

}  // namespace meshdiff
