#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "meshdiff/checkpoint.hpp"

namespace meshdiff {

struct SampleRequest {
  int class_label = 0;
  int count = 1;
  int steps = 0;       // 0 = all trained timesteps
  std::uint64_t seed = 0;
  int face_count = 0;  // 0 = draw from the class's training histogram
  int threads = 1;

  void validate(const Checkpoint& ckpt) const;
};

/// Strictly decreasing timesteps ending at 1: all of T..1 when k == T,
/// otherwise k evenly spaced values from T down to 1 ({1} when k == 1).
std::vector<int> timestep_sequence(int total_steps, int k);

/// Draws the face count from the class histogram.
int draw_face_count(const Checkpoint& ckpt, int class_label, std::uint64_t seed);

/// Runs the reverse process for one soup using `request.seed`. The last step
/// takes the argmax of the predicted clean categories.
QuantizedTriangleSoup sample_soup(const Checkpoint& ckpt, const SampleRequest& request);
QuantizedTriangleSoup sample_soup(const Denoiser& model, const Checkpoint& ckpt, const NoiseSchedule& schedule,
                                  const SampleRequest& request);

/// Seed used for item `index` of a batch.
std::uint64_t item_seed(std::uint64_t seed, std::size_t index);

struct SampleOutcome {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  int class_label = 0;
  int faces = 0;           // sampled face count
  std::string path;        // empty on failure
  std::string status;      // "ok" or the failure message
  QuantizedTriangleSoup soup;
};

/// Samples `request.count` soups, writes sample_NNNN.obj for each that
/// survives soup_to_mesh and a manifest.jsonl with one row per item.
std::vector<SampleOutcome> generate_batch(const Checkpoint& ckpt, const SampleRequest& request,
                                          const std::filesystem::path& out_dir);

}  // namespace meshdiff
