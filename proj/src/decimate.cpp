#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>

#include "meshdiff/error.hpp"
#include "meshdiff/preprocess.hpp"

namespace meshdiff {

namespace {

using EdgeKey = std::pair<std::uint32_t, std::uint32_t>;

EdgeKey undirected(std::uint32_t a, std::uint32_t b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

struct EdgeUse {
  std::uint32_t face;
  std::uint32_t from, to;
};

struct Adjacency {
  std::map<EdgeKey, std::vector<EdgeUse>> edges;

  explicit Adjacency(const Mesh& mesh) {
    for (std::uint32_t j = 0; j < mesh.faces.size(); ++j) {
      const Face& f = mesh.faces[j];
      for (int k = 0; k < 3; ++k) {
        const std::uint32_t a = f[k], b = f[(k + 1) % 3];
        edges[undirected(a, b)].push_back({j, a, b});
      }
    }
  }

  // The face across edge (a, b) of `face` when the edge is manifold and both
  // faces traverse it in opposite directions.
  std::optional<std::uint32_t> neighbor(std::uint32_t face, std::uint32_t a, std::uint32_t b) const {
    const auto& uses = edges.at(undirected(a, b));
    if (uses.size() != 2) return std::nullopt;
    const EdgeUse& other = uses[0].face == face ? uses[1] : uses[0];
    if (other.face == face || other.from != b || other.to != a) return std::nullopt;
    return other.face;
  }
};

Vec3 face_normal(const Mesh& m, const Face& f) {
  return cross(m.vertices[f[1]] - m.vertices[f[0]], m.vertices[f[2]] - m.vertices[f[0]]);
}

// Ear clipping of a simple polygon given as a CCW loop in the plane with
// normal `normal`. Returns triangles as loop-vertex ids, or nullopt on failure.
std::optional<std::vector<Face>> ear_clip(const Mesh& mesh, const std::vector<std::uint32_t>& loop, Vec3 normal) {
  const std::size_t n = loop.size();
  if (n < 3) return std::nullopt;
  normal = normalized(normal);
  const Vec3 helper = std::abs(normal.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 u = normalized(cross(helper, normal));
  const Vec3 w = cross(normal, u);

  struct P2 {
    double x, y;
  };
  std::vector<P2> pts(n);
  double extent = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = mesh.vertices[loop[i]] - mesh.vertices[loop[0]];
    pts[i] = {dot(p, u), dot(p, w)};
    extent = std::max({extent, std::abs(pts[i].x), std::abs(pts[i].y)});
  }
  const double eps = 1e-12 * std::max(extent * extent, std::numeric_limits<double>::min());

  auto cross2 = [&](std::size_t a, std::size_t b, std::size_t c) {
    return (pts[b].x - pts[a].x) * (pts[c].y - pts[a].y) - (pts[b].y - pts[a].y) * (pts[c].x - pts[a].x);
  };
  double area2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    area2 += pts[i].x * pts[j].y - pts[j].x * pts[i].y;
  }
  if (!(area2 > eps)) return std::nullopt;

  auto inside = [&](std::size_t p, std::size_t a, std::size_t b, std::size_t c) {
    return cross2(a, b, p) >= -eps && cross2(b, c, p) >= -eps && cross2(c, a, p) >= -eps;
  };
  auto min_angle = [&](std::size_t a, std::size_t b, std::size_t c) {
    auto ang = [&](std::size_t o, std::size_t p, std::size_t q) {
      const double x1 = pts[p].x - pts[o].x, y1 = pts[p].y - pts[o].y;
      const double x2 = pts[q].x - pts[o].x, y2 = pts[q].y - pts[o].y;
      return std::atan2(std::abs(x1 * y2 - y1 * x2), x1 * x2 + y1 * y2);
    };
    return std::min({ang(a, b, c), ang(b, c, a), ang(c, a, b)});
  };

  std::vector<std::size_t> ring(n);
  for (std::size_t i = 0; i < n; ++i) ring[i] = i;
  std::vector<Face> tris;
  while (ring.size() > 3) {
    const std::size_t r = ring.size();
    std::optional<std::size_t> best;
    double best_quality = -1;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t a = ring[(i + r - 1) % r], b = ring[i], c = ring[(i + 1) % r];
      if (!(cross2(a, b, c) > eps)) continue;
      bool blocked = false;
      for (std::size_t k = 0; k < r && !blocked; ++k) {
        const std::size_t p = ring[k];
        if (p == a || p == b || p == c) continue;
        const bool coincident = (pts[p].x == pts[a].x && pts[p].y == pts[a].y) ||
                                (pts[p].x == pts[b].x && pts[p].y == pts[b].y) ||
                                (pts[p].x == pts[c].x && pts[p].y == pts[c].y);
        if (coincident || inside(p, a, b, c)) blocked = true;
      }
      if (blocked) continue;
      const double q = min_angle(a, b, c);
      if (q > best_quality) {
        best_quality = q;
        best = i;
      }
    }
    if (!best) return std::nullopt;
    const std::size_t i = *best;
    tris.push_back({loop[ring[(i + r - 1) % r]], loop[ring[i]], loop[ring[(i + 1) % r]]});
    ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(i));
  }
  if (!(cross2(ring[0], ring[1], ring[2]) > eps)) return std::nullopt;
  tris.push_back({loop[ring[0]], loop[ring[1]], loop[ring[2]]});
  return tris;
}

struct Cluster {
  std::vector<std::uint32_t> faces;
  Vec3 normal;                     // area-weighted
  std::vector<EdgeUse> boundary;   // directed, in face order
};

// Single boundary loop of a cluster with dissolved vertices skipped; nullopt
// for holes, pinches or loops that become too short.
std::optional<std::vector<std::uint32_t>> boundary_loop(const Cluster& c, const std::set<std::uint32_t>& dissolved) {
  std::map<std::uint32_t, std::uint32_t> next;
  for (const EdgeUse& e : c.boundary)
    if (!next.emplace(e.from, e.to).second) return std::nullopt;  // pinch vertex
  if (next.size() < 3) return std::nullopt;
  const std::uint32_t start = next.begin()->first;
  std::vector<std::uint32_t> loop;
  std::uint32_t v = start;
  std::size_t steps = 0;
  do {
    if (!dissolved.contains(v)) loop.push_back(v);
    auto it = next.find(v);
    if (it == next.end()) return std::nullopt;
    v = it->second;
    if (++steps > next.size()) return std::nullopt;
  } while (v != start);
  if (steps != next.size()) return std::nullopt;  // more than one loop
  if (loop.size() < 3) return std::nullopt;
  // Start at the smallest index for determinism.
  std::rotate(loop.begin(), std::min_element(loop.begin(), loop.end()), loop.end());
  return loop;
}

}  // namespace

Mesh planar_decimate(const Mesh& mesh, double angle_degrees, DecimationLog* log) {
  mesh.validate();
  if (!(angle_degrees > 0) || !(angle_degrees < 180)) throw ArgumentError("decimation angle must be in (0, 180)");
  const double cos_limit = std::cos(angle_degrees * std::numbers::pi / 180.0);
  const Adjacency adj(mesh);
  const std::size_t nf = mesh.faces.size();

  std::vector<Vec3> normals(nf);
  for (std::size_t j = 0; j < nf; ++j) normals[j] = face_normal(mesh, mesh.faces[j]);

  // Region growing from seed faces in index order.
  std::vector<int> cluster_of(nf, -1);
  std::vector<Cluster> clusters;
  for (std::uint32_t seed = 0; seed < nf; ++seed) {
    if (cluster_of[seed] >= 0) continue;
    const int id = static_cast<int>(clusters.size());
    Cluster c;
    const Vec3 seed_normal = normalized(normals[seed]);
    std::deque<std::uint32_t> queue{seed};
    cluster_of[seed] = id;
    while (!queue.empty()) {
      const std::uint32_t f = queue.front();
      queue.pop_front();
      c.faces.push_back(f);
      if (length_squared(seed_normal) == 0) continue;  // zero-area seed stays alone
      const Face& face = mesh.faces[f];
      for (int k = 0; k < 3; ++k) {
        auto nb = adj.neighbor(f, face[k], face[(k + 1) % 3]);
        if (!nb || cluster_of[*nb] >= 0) continue;
        const Vec3 n = normalized(normals[*nb]);
        if (length_squared(n) == 0 || dot(n, seed_normal) < cos_limit) continue;
        cluster_of[*nb] = id;
        queue.push_back(*nb);
      }
    }
    std::sort(c.faces.begin(), c.faces.end());
    for (std::uint32_t f : c.faces) {
      c.normal += normals[f];
      const Face& face = mesh.faces[f];
      for (int k = 0; k < 3; ++k) {
        const std::uint32_t a = face[k], b = face[(k + 1) % 3];
        auto nb = adj.neighbor(f, a, b);
        if (!nb || cluster_of[*nb] != id) c.boundary.push_back({f, a, b});
      }
    }
    clusters.push_back(std::move(c));
  }

  // Vertices lying on a straight two-edge chain of the region-boundary graph.
  std::map<std::uint32_t, std::set<std::uint32_t>> boundary_graph;
  for (const Cluster& c : clusters)
    for (const EdgeUse& e : c.boundary) {
      boundary_graph[e.from].insert(e.to);
      boundary_graph[e.to].insert(e.from);
    }
  std::set<std::uint32_t> candidates;
  for (const auto& [v, nbrs] : boundary_graph) {
    if (nbrs.size() != 2) continue;
    const Vec3 p = mesh.vertices[v];
    const Vec3 a = normalized(mesh.vertices[*nbrs.begin()] - p);
    const Vec3 b = normalized(mesh.vertices[*nbrs.rbegin()] - p);
    // Deviation from a straight line is below the angle limit.
    if (dot(a, b) <= -cos_limit) candidates.insert(v);
  }

  std::vector<std::optional<std::vector<Face>>> replacement(clusters.size());
  std::vector<bool> failed(clusters.size(), false);
  std::set<std::uint32_t> blocked;
  bool changed = true;
  while (changed) {
    changed = false;
    std::set<std::uint32_t> dissolved;
    std::set_difference(candidates.begin(), candidates.end(), blocked.begin(), blocked.end(),
                        std::inserter(dissolved, dissolved.end()));
    for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
      const Cluster& c = clusters[ci];
      replacement[ci].reset();
      failed[ci] = false;
      const bool touches_dissolved = std::any_of(c.boundary.begin(), c.boundary.end(),
                                                 [&](const EdgeUse& e) { return dissolved.contains(e.from); });
      std::optional<std::vector<Face>> tris;
      if (auto loop = boundary_loop(c, dissolved)) {
        if (touches_dissolved || loop->size() - 2 < c.faces.size()) tris = ear_clip(mesh, *loop, c.normal);
        else continue;  // nothing to gain; keep original faces
      }
      if (tris) {
        replacement[ci] = std::move(tris);
        continue;
      }
      // Failed: the cluster keeps its faces, so its boundary vertices must stay.
      failed[ci] = true;
      for (const EdgeUse& e : c.boundary)
        if (dissolved.contains(e.from) && blocked.insert(e.from).second) changed = true;
    }
  }

  Mesh out;
  std::vector<Face> faces;
  DecimationLog stats;
  stats.clusters = static_cast<int>(clusters.size());
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    if (replacement[ci]) {
      ++stats.retriangulated;
      faces.insert(faces.end(), replacement[ci]->begin(), replacement[ci]->end());
    } else {
      if (failed[ci] && clusters[ci].faces.size() > 1) ++stats.failed;
      for (std::uint32_t f : clusters[ci].faces) faces.push_back(mesh.faces[f]);
    }
  }

  std::vector<std::int64_t> remap(mesh.vertices.size(), -1);
  for (const Face& f : faces)
    for (std::uint32_t v : f) remap[v] = 0;
  for (std::size_t v = 0; v < remap.size(); ++v)
    if (remap[v] == 0) {
      remap[v] = static_cast<std::int64_t>(out.vertices.size());
      out.vertices.push_back(mesh.vertices[v]);
    }
  out.faces.reserve(faces.size());
  for (const Face& f : faces)
    out.faces.push_back({static_cast<std::uint32_t>(remap[f[0]]), static_cast<std::uint32_t>(remap[f[1]]),
                         static_cast<std::uint32_t>(remap[f[2]])});
  if (log) *log = stats;
  return out;
}

}  // namespace meshdiff
