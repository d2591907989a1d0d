#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshdiff/denoiser.hpp"
#include "meshdiff/diffusion.hpp"
#include "meshdiff/optim.hpp"
#include "meshdiff/preprocess.hpp"

namespace meshdiff {

struct ScheduleConfig {
  int steps = kDefaultTimesteps;
  double offset = 0.008;
  double beta_clip = 0.999;

  NoiseSchedule build() const { return cosine_schedule(steps, offset, beta_clip); }
  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

/// Everything needed to resume training or to sample.
struct Checkpoint {
  static constexpr std::uint16_t kVersion = 1;

  DenoiserConfig model;
  ScheduleConfig schedule;
  OptimizerConfig optimizer;
  long step = 0;
  long epoch = 0;
  std::vector<std::string> class_names;
  /// face_histograms[c][m]: training records of class c with m faces.
  std::vector<std::vector<std::uint32_t>> face_histograms;
  nlohmann::json training;  // free-form run settings
  DenoiserParams params;
  std::optional<AdamState> adam;

  int bits() const;
};

/// Per-class face-count histograms of a dataset, sized max_faces + 1.
std::vector<std::vector<std::uint32_t>> face_count_histograms(const DatasetFile& data);

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScheduleConfig& c);
ScheduleConfig schedule_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OptimizerConfig& c);
OptimizerConfig optimizer_config_from_json(const nlohmann::json& j);

/// "PDCK", u16 version, u32 header length, JSON header, then tensor records
/// {u16 name length, name, u8 dtype (0 = f32, 1 = f64), u8 rank, u64 dims, data}.
/// Parameters are stored as f64; optimizer moments as "adam.m.<name>" / "adam.v.<name>".
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint_file(const std::filesystem::path& path);

}  // namespace meshdiff
