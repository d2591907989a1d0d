#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "meshdiff/geometry.hpp"

namespace meshdiff {

using Face = std::array<std::uint32_t, 3>;

/// Indexed triangle mesh with 0-based face indices.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  /// Throws StructuralError if an index is out of range or repeated within a face.
  void validate() const;

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

/// Nine coordinate categories of one triangle, vertex-major: v0.xyz, v1.xyz, v2.xyz.
using FaceCodes = std::array<std::uint16_t, 9>;

constexpr int kDefaultBits = 8;
constexpr int kDefaultMaxFaces = 800;

/// Fixed-capacity quantized triangle soup. Slots whose mask is 0 are padding,
/// hold category 0 and never contribute to losses or metrics.
struct QuantizedTriangleSoup {
  int bits = kDefaultBits;
  int class_label = 0;
  std::vector<FaceCodes> faces;
  std::vector<std::uint8_t> mask;

  static QuantizedTriangleSoup empty(int bits, int max_faces, int class_label = 0);

  int categories() const { return 1 << bits; }
  int max_faces() const { return static_cast<int>(faces.size()); }
  int face_count() const;

  /// Appends into the first free slot; throws CapacityError when full.
  void push_face(const FaceCodes& codes);

  /// Range, mask and padding invariants; throws DomainError / ArgumentError.
  void validate() const;

  friend bool operator==(const QuantizedTriangleSoup&, const QuantizedTriangleSoup&) = default;
};

struct PointCloud {
  std::vector<Vec3> points;
};

struct BoundingBox {
  Vec3 min, max;
  Vec3 center() const { return (min + max) * 0.5; }
  double diagonal() const { return length(max - min); }
};

BoundingBox bounding_box(std::span<const Vec3> points);

/// Centers the bounding box at the origin and scales its diagonal to 1.
Mesh normalize_mesh(const Mesh& mesh);

/// Category of a normalized coordinate: clamp(floor((u + 0.5) * 2^bits), 0, 2^bits - 1).
std::uint16_t quantize_coordinate(double u, int bits);

/// Bin center of a category: (c + 0.5) / 2^bits - 0.5.
double dequantize_coordinate(std::uint16_t c, int bits);

/// Quantizes a normalized mesh into a soup of capacity `max_faces`. Faces that
/// collapse after quantization are dropped; duplicate faces (up to cyclic
/// rotation) are kept once. Retained faces occupy the leading slots in input
/// order.
QuantizedTriangleSoup quantize(const Mesh& mesh, int bits = kDefaultBits,
                               int max_faces = kDefaultMaxFaces, int class_label = 0);

/// Dequantizes to bin centers, merging identical vertices and dropping
/// collapsed faces. Throws EmptyMeshError when nothing survives.
Mesh soup_to_mesh(const QuantizedTriangleSoup& soup);

/// Rotates each face so its smallest (z, y, x) vertex comes first, then sorts
/// the real faces; padding follows.
QuantizedTriangleSoup canonical_order(const QuantizedTriangleSoup& soup);

/// Area-weighted uniform surface samples.
PointCloud sample_surface_points(const Mesh& mesh, std::size_t count, std::uint64_t seed);

}  // namespace meshdiff
