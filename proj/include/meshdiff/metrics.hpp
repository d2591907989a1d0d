#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshdiff/mesh.hpp"

namespace meshdiff {

/// Row-major rows x cols matrix of pairwise Chamfer distances.
struct DistanceMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Mean squared nearest-neighbor distance from a to b plus the symmetric term.
double chamfer(const PointCloud& a, const PointCloud& b);

/// Chamfer distance between every (a[i], b[j]).
DistanceMatrix chamfer_matrix(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b, int threads = 1);

/// Mean over reference clouds of the closest generated cloud's distance.
/// `gen_ref` is |gen| x |ref|.
double mmd(const DistanceMatrix& gen_ref);
/// Percentage of reference clouds that are the nearest reference of some
/// generated cloud (ties to the lowest reference index).
double coverage(const DistanceMatrix& gen_ref);
/// Leave-one-out 1-NN accuracy (percent) over gen followed by ref; ties go
/// to the lowest union index.
double one_nna(const DistanceMatrix& gen_gen, const DistanceMatrix& ref_ref, const DistanceMatrix& gen_ref);

double mmd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int threads = 1);
double coverage(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int threads = 1);
double one_nna(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int threads = 1);

/// Jensen-Shannon divergence (nats) between the pooled occupancy histograms
/// of both sets over a grid^3 voxelization of [-1, 1]^3.
double jsd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int grid = 28);

/// Recenters the bounding box at the origin and scales isotropically so the
/// largest half-extent is 1.
PointCloud normalize_cloud(const PointCloud& cloud);

struct EvalConfig {
  int points = 2048;
  std::uint64_t seed = 0;
  int grid = 28;
  double metric_scale = 1000.0;
  int threads = 1;
};

nlohmann::json to_json(const EvalConfig& c);

struct SkippedMesh {
  std::string path;
  std::string error;
};

struct MetricsReport {
  double mmd = 0;  // scaled by metric_scale
  double cov_percent = 0;
  double one_nna_percent = 0;
  double jsd = 0;  // scaled by metric_scale
  /// Some generated cloud coincides with a reference cloud, so 1-NNA is not meaningful.
  bool one_nna_degenerate = false;
  EvalConfig config;
  std::size_t gen_count = 0, ref_count = 0;
  std::vector<SkippedMesh> skipped;

  nlohmann::json to_json() const;
};

/// Loads every *.obj directly inside a directory (sorted by name) as a
/// normalized surface point cloud. Point sampling is seeded by
/// (seed, file name), so the same file yields the same cloud in either role.
std::vector<PointCloud> load_clouds(const std::filesystem::path& dir, const EvalConfig& config,
                                    std::vector<SkippedMesh>* skipped, std::vector<std::string>* names = nullptr);

/// Throws ArgumentError when either side has fewer than two usable meshes.
MetricsReport evaluate(const std::filesystem::path& gen_dir, const std::filesystem::path& ref_dir,
                       const EvalConfig& config);

}  // namespace meshdiff
