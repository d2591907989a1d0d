#include "meshdiff/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "meshdiff/error.hpp"
#include "meshdiff/parallel.hpp"
#include "meshdiff/random.hpp"

namespace meshdiff {

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be positive");
  if (batch_size < 1) throw ArgumentError("batch_size must be positive");
  if (max_steps < 0) throw ArgumentError("max_steps must be non-negative");
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) throw ArgumentError("warmup_fraction must be in [0, 1)");
  if (checkpoint_every < 0) throw ArgumentError("checkpoint_every must be non-negative");
  if (!(scale_range.low > 0 && scale_range.low <= scale_range.high)) throw ArgumentError("bad scale range");
  if (threads < 1) throw ArgumentError("threads must be positive");
}

long TrainConfig::steps_per_epoch(std::size_t records) const {
  return (static_cast<long>(records) + batch_size - 1) / batch_size;
}

long TrainConfig::total_steps(std::size_t records) const {
  const long all = steps_per_epoch(records) * epochs;
  return max_steps > 0 ? std::min(all, max_steps) : all;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"warmup_fraction", c.warmup_fraction},
          {"checkpoint_every", c.checkpoint_every},
          {"augment", c.augment},
          {"scale_range", {c.scale_range.low, c.scale_range.high}},
          {"seed", c.seed}};
}

Checkpoint initial_checkpoint(const DatasetFile& train_set, DenoiserConfig model, const ScheduleConfig& schedule,
                              OptimizerConfig optimizer, const TrainConfig& config) {
  config.validate();
  if (train_set.records.empty()) throw ArgumentError("training set is empty");
  model.categories = 1 << train_set.bits;
  model.max_faces = train_set.max_faces;
  model.class_count = static_cast<int>(train_set.class_names.size());
  const long total = config.total_steps(train_set.records.size());
  optimizer.total_steps = total;
  optimizer.warmup_steps = std::min(static_cast<long>(config.warmup_fraction * static_cast<double>(total)), total - 1);
  optimizer.validate();

  Checkpoint c;
  c.model = model;
  c.schedule = schedule;
  c.optimizer = optimizer;
  c.class_names = train_set.class_names;
  c.face_histograms = face_count_histograms(train_set);
  c.training = to_json(config);
  c.params = DenoiserParams::initialize(model, derive_key(config.seed, {0x4D4F44454Cu}));
  c.adam = AdamState::zeros(model);
  return c;
}

namespace {

QuantizedTriangleSoup augmented(const QuantizedTriangleSoup& soup, ScaleRange range, std::uint64_t seed) {
  try {
    const Mesh scaled = augment_scale(soup_to_mesh(soup), range, seed);
    QuantizedTriangleSoup out = canonical_order(quantize(scaled, soup.bits, soup.max_faces(), soup.class_label));
    if (out.face_count() > 0) return out;
  } catch (const Error&) {
  }
  return soup;
}

}  // namespace

std::vector<QuantizedTriangleSoup> training_batch(const DatasetFile& train_set, const TrainConfig& config, long step) {
  const std::size_t n = train_set.records.size();
  const long per_epoch = config.steps_per_epoch(n);
  const long epoch = (step - 1) / per_epoch;
  const long within = (step - 1) % per_epoch;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(config.seed, {0x53485546u, static_cast<std::uint64_t>(epoch)});
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const std::size_t begin = static_cast<std::size_t>(within) * static_cast<std::size_t>(config.batch_size);
  const std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.batch_size));
  std::vector<QuantizedTriangleSoup> batch(end - begin);
  const bool scale = config.augment && !(config.scale_range.low == 1.0 && config.scale_range.high == 1.0);
  parallel_for(batch.size(), config.threads, [&](std::size_t k) {
    const std::size_t record = order[begin + k];
    QuantizedTriangleSoup soup = train_set.soup(record);
    if (scale)
      soup = augmented(soup, config.scale_range,
                       derive_key(config.seed, {0x41554Du, static_cast<std::uint64_t>(epoch), record}));
    batch[k] = std::move(soup);
  });
  return batch;
}

TrainResult train(const DatasetFile& train_set, Checkpoint start, const TrainConfig& config,
                  const TrainCallbacks& callbacks) {
  config.validate();
  train_set.validate();
  if (train_set.records.empty()) throw ArgumentError("training set is empty");
  if (start.model.categories != (1 << train_set.bits) || start.model.max_faces != train_set.max_faces ||
      start.class_names != train_set.class_names)
    throw ArgumentError("checkpoint does not match the training set");
  if (!start.adam) start.adam = AdamState::zeros(start.model);

  const NoiseSchedule schedule = start.schedule.build();
  const long per_epoch = config.steps_per_epoch(train_set.records.size());
  const long total = start.optimizer.total_steps;

  TrainResult result;
  Denoiser model(start.model, std::move(start.params));
  start.params = DenoiserParams{};
  auto snapshot = [&](long step) {
    Checkpoint c = start;
    c.step = step;
    c.epoch = step / per_epoch;
    c.params = model.params();
    return c;
  };

  for (long step = start.step + 1; step <= total; ++step) {
    const std::vector<QuantizedTriangleSoup> batch = training_batch(train_set, config, step);
    GradientResult g;
    try {
      g = gradient(model, batch, schedule, derive_key(config.seed, {0x53544550u, static_cast<std::uint64_t>(step)}),
                   config.threads);
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.error = "step " + std::to_string(step) + ": " + e.what();
      result.checkpoint = snapshot(step - 1);
      return result;
    }
    const double lr = lr_at(step, start.optimizer);
    adamw_step(model.params(), g.grads, *start.adam, start.optimizer, step, lr);

    const TrainStep record{step, (step - 1) / per_epoch, g.loss, lr};
    result.trace.push_back(record);
    if (callbacks.on_step) callbacks.on_step(record);
    const bool epoch_end = step % per_epoch == 0;
    const bool periodic = config.checkpoint_every > 0 && epoch_end && (step / per_epoch) % config.checkpoint_every == 0;
    if (periodic && step != total && callbacks.on_checkpoint) callbacks.on_checkpoint(snapshot(step));
  }
  result.checkpoint = snapshot(std::max(total, start.step));
  if (callbacks.on_checkpoint) callbacks.on_checkpoint(result.checkpoint);
  return result;
}

}  // namespace meshdiff
