#include "meshdiff/spatial.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "meshdiff/error.hpp"

namespace meshdiff {

double point_triangle_distance_squared(Vec3 p, Vec3 a, Vec3 b, Vec3 c) {
  // Closest point by Voronoi-region classification (Ericson, RTCD 5.1.5).
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return length_squared(ap);

  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return length_squared(bp);

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return distance_squared(p, a + ab * v);
  }

  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return length_squared(cp);

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return distance_squared(p, a + ac * w);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return distance_squared(p, b + (c - b) * w);
  }

  const double denom = va + vb + vc;
  if (!(denom > 0)) {
    // Degenerate triangle: fall back to the three edges.
    auto seg = [&](Vec3 s, Vec3 e) {
      const Vec3 d = e - s;
      const double len2 = length_squared(d);
      const double t = len2 > 0 ? std::clamp(dot(p - s, d) / len2, 0.0, 1.0) : 0.0;
      return distance_squared(p, s + d * t);
    };
    return std::min({seg(a, b), seg(b, c), seg(a, c)});
  }
  const double v = vb / denom, w = vc / denom;
  return distance_squared(p, a + ab * v + ac * w);
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.empty()) throw ArgumentError("k-d tree needs at least one point");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points_.size() / 8 + 2);
  build(0, static_cast<std::uint32_t>(points_.size()));
}

int KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= 8) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::uint32_t i = begin; i < end; ++i)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], points_[order_[i]][a]);
      hi[a] = std::max(hi[a], points_[order_[i]][a]);
    }
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  if (!(hi[axis] > lo[axis])) return id;  // all points coincide

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t x, std::uint32_t y) { return points_[x][axis] < points_[y][axis]; });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Vec3& q, double& best) const {
  const Node& n = nodes_[node];
  if (n.left < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) best = std::min(best, distance_squared(q, points_[order_[i]]));
    return;
  }
  const double diff = q[n.axis] - n.split;
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best);
  if (diff * diff < best) search(far, q, best);
}

double KdTree::nearest_distance_squared(const Vec3& q) const {
  double best = std::numeric_limits<double>::infinity();
  search(0, q, best);
  return best;
}

TriangleBvh::TriangleBvh(const Mesh& mesh) {
  if (mesh.faces.empty()) throw ArgumentError("BVH needs at least one triangle");
  for (const Face& f : mesh.faces) {
    triangles_.push_back({mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]});
    const auto& t = triangles_.back();
    centroids_.push_back((t[0] + t[1] + t[2]) / 3.0);
  }
  order_.resize(triangles_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  build(0, static_cast<std::uint32_t>(triangles_.size()));
}

int TriangleBvh::build(std::uint32_t begin, std::uint32_t end) {
  Node node{};
  node.lo = node.hi = triangles_[order_[begin]][0];
  for (std::uint32_t i = begin; i < end; ++i)
    for (const Vec3& v : triangles_[order_[i]])
      for (int a = 0; a < 3; ++a) {
        node.lo[a] = std::min(node.lo[a], v[a]);
        node.hi[a] = std::max(node.hi[a], v[a]);
      }
  node.begin = begin;
  node.end = end;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= 4) return id;

  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (node.hi[a] - node.lo[a] > node.hi[axis] - node.lo[axis]) axis = a;
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t x, std::uint32_t y) { return centroids_[x][axis] < centroids_[y][axis]; });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double TriangleBvh::box_distance_squared(const Node& n, const Vec3& q) {
  double d = 0;
  for (int a = 0; a < 3; ++a) {
    const double excess = std::max({n.lo[a] - q[a], 0.0, q[a] - n.hi[a]});
    d += excess * excess;
  }
  return d;
}

double TriangleBvh::distance_squared(const Vec3& q) const {
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (box_distance_squared(n, q) >= best) continue;
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const auto& t = triangles_[order_[i]];
        best = std::min(best, point_triangle_distance_squared(q, t[0], t[1], t[2]));
      }
      continue;
    }
    const double dl = box_distance_squared(nodes_[n.left], q);
    const double dr = box_distance_squared(nodes_[n.right], q);
    // Visit the nearer child first.
    if (dl < dr) {
      stack.push_back(n.right);
      stack.push_back(n.left);
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  return best;
}

}  // namespace meshdiff
