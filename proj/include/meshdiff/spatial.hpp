#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "meshdiff/geometry.hpp"
#include "meshdiff/mesh.hpp"

namespace meshdiff {

/// Static 3D k-d tree answering exact nearest-neighbor queries.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  /// Squared distance from q to the closest stored point.
  double nearest_distance_squared(const Vec3& q) const;

 private:
  struct Node {
    std::uint32_t begin, end;  // range in order_
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0;
  };
  int build(std::uint32_t begin, std::uint32_t end);
  void search(int node, const Vec3& q, double& best) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Bounding-volume hierarchy over mesh triangles for exact point-to-surface
/// distance queries.
class TriangleBvh {
 public:
  explicit TriangleBvh(const Mesh& mesh);

  double distance_squared(const Vec3& q) const;

 private:
  struct Node {
    Vec3 lo, hi;
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
  };
  int build(std::uint32_t begin, std::uint32_t end);
  static double box_distance_squared(const Node& n, const Vec3& q);

  std::vector<std::array<Vec3, 3>> triangles_;
  std::vector<Vec3> centroids_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace meshdiff
