#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "meshdiff/mesh.hpp"

namespace meshdiff {

struct ScaleRange {
  double low = 0.75;
  double high = 1.25;
};

/// 30 evenly spaced angles from 1 to 60 degrees.
std::vector<double> default_decimation_angles();

struct DatasetConfig {
  std::vector<double> decimation_angles = default_decimation_angles();
  double hausdorff_threshold = 0.02;
  int hausdorff_samples = 10000;
  double train_fraction = 0.9;
  int max_faces = kDefaultMaxFaces;
  int bits = kDefaultBits;
  ScaleRange scale_range;
  std::uint64_t seed = 0;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Planar decimation

struct DecimationLog {
  int clusters = 0;
  int retriangulated = 0;
  int failed = 0;  // clusters left undecimated (holes, pinches, ear-clip failure)
};

/// Grows regions of adjacent, consistently wound faces whose normals are
/// within `angle_degrees` of the region's seed face, dissolves boundary
/// vertices that lie on a straight chain between two regions, and re-triangulates
/// each region's boundary loop by ear clipping. Surviving vertices keep their
/// positions; unreferenced vertices are removed (order preserved).
Mesh planar_decimate(const Mesh& mesh, double angle_degrees, DecimationLog* log = nullptr);

/// Symmetric Hausdorff estimate: `samples` surface points are drawn from each
/// mesh with the same seed, and each directed term is the largest distance
/// from one mesh's samples to the other mesh's surface.
double hausdorff_distance(const Mesh& a, const Mesh& b, int samples, std::uint64_t seed);

/// Independent uniform per-axis factors in [low, high].
Vec3 draw_scale_factors(ScaleRange range, std::uint64_t seed);

/// Scales each axis independently, then re-normalizes.
Mesh augment_scale(const Mesh& mesh, ScaleRange range, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset container

struct DatasetRecord {
  int class_id = 0;
  std::vector<FaceCodes> faces;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct DatasetFile {
  static constexpr std::uint16_t kVersion = 1;

  int bits = kDefaultBits;
  int max_faces = kDefaultMaxFaces;
  std::vector<std::string> class_names;
  std::vector<DatasetRecord> records;

  /// Record i as a padded soup of capacity max_faces.
  QuantizedTriangleSoup soup(std::size_t i) const;
  void add(const QuantizedTriangleSoup& soup);
  void validate() const;

  friend bool operator==(const DatasetFile&, const DatasetFile&) = default;
};

std::vector<std::uint8_t> serialize_dataset(const DatasetFile& file);
DatasetFile parse_dataset(std::span<const std::uint8_t> bytes);
void write_dataset_file(const std::filesystem::path& path, const DatasetFile& file);
DatasetFile read_dataset_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Pipeline

struct BuildResult {
  DatasetFile train;
  DatasetFile test;
  nlohmann::json report;
};

/// Builds train/test datasets from `input_dir/<class>/**.obj`. Splits by
/// source mesh; output order follows sorted file paths.
BuildResult build_dataset(const std::filesystem::path& input_dir, const DatasetConfig& config, int threads = 1);

}  // namespace meshdiff
