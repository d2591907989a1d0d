#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "meshdiff/checkpoint.hpp"
#include "meshdiff/metrics.hpp"
#include "meshdiff/preprocess.hpp"
#include "meshdiff/trainer.hpp"

namespace meshdiff {

struct SampleSettings {
  int steps = kDefaultTimesteps;
  int count = 16;
  int class_label = 0;
  int face_count = 0;  // 0 = from the training histogram
};

/// One file configures every stage. Sub-seeds, thread counts and the
/// augmentation range are propagated from the top-level fields by resolve().
struct RunConfig {
  DatasetConfig dataset;
  DenoiserConfig model;
  ScheduleConfig schedule;
  OptimizerConfig optimizer;
  TrainConfig train;
  SampleSettings sample;
  EvalConfig eval;
  std::uint64_t seed = 0;
  int threads = 1;

  void resolve();
  void validate() const;
};

/// Values as written by to_json; warmup and total optimizer steps are derived
/// at training time and therefore not part of the file.
nlohmann::json to_json(const RunConfig& config);

/// Overlays `j` onto `base`. Unknown keys are rejected with ArgumentError.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace meshdiff
