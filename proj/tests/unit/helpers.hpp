#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "meshdiff/mesh.hpp"
#include "meshdiff/preprocess.hpp"

namespace testutil {

using meshdiff::Face;
using meshdiff::Mesh;
using meshdiff::Vec3;

inline Mesh cube(double h = 0.5) {
  Mesh m;
  for (int i = 0; i < 8; ++i) m.vertices.push_back({i & 1 ? h : -h, i & 2 ? h : -h, i & 4 ? h : -h});
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

/// Each cube face split into 8 coplanar triangles around its center and edge midpoints.
inline Mesh subdivided_cube(double h = 0.5) {
  Mesh m;
  auto add = [&](Vec3 v) {
    for (std::size_t i = 0; i < m.vertices.size(); ++i)
      if (m.vertices[i] == v) return static_cast<std::uint32_t>(i);
    m.vertices.push_back(v);
    return static_cast<std::uint32_t>(m.vertices.size() - 1);
  };
  for (int axis = 0; axis < 3; ++axis)
    for (int sign = -1; sign <= 1; sign += 2) {
      const int u = (axis + 1) % 3, w = (axis + 2) % 3;
      auto at = [&](double a, double b) {
        Vec3 p{};
        p[axis] = sign * h;
        p[u] = a;
        p[w] = b;
        return add(p);
      };
      const double c[3] = {-h, 0, h};
      // ring of 8 boundary points counter-clockwise in (u, w), center in the middle
      const std::uint32_t center = at(0, 0);
      const std::uint32_t ring[8] = {at(c[0], c[0]), at(c[1], c[0]), at(c[2], c[0]), at(c[2], c[1]),
                                     at(c[2], c[2]), at(c[1], c[2]), at(c[0], c[2]), at(c[0], c[1])};
      for (int k = 0; k < 8; ++k) {
        Face f{center, ring[k], ring[(k + 1) % 8]};
        // u x w = +axis, so counter-clockwise in (u, w) faces +axis
        if (sign < 0) std::swap(f[1], f[2]);
        m.faces.push_back(f);
      }
    }
  return m;
}

inline Mesh tetrahedron() {
  return {{{0.4, 0.4, 0.4}, {-0.4, -0.4, 0.4}, {-0.4, 0.4, -0.4}, {0.4, -0.4, -0.4}},
          {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}}};
}

inline Mesh square_pyramid() {
  return {{{-0.4, -0.4, -0.3}, {0.4, -0.4, -0.3}, {0.4, 0.4, -0.3}, {-0.4, 0.4, -0.3}, {0.0, 0.0, 0.35}},
          {{0, 2, 1}, {0, 3, 2}, {0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}}};
}

inline Mesh octahedron() {
  return {{{0.45, 0, 0}, {-0.45, 0, 0}, {0, 0.45, 0}, {0, -0.45, 0}, {0, 0, 0.45}, {0, 0, -0.45}},
          {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}}};
}

inline Mesh fan_square() {
  return {{{-1, -1, 0}, {1, -1, 0}, {1, 1, 0}, {-1, 1, 0}, {0, 0, 0}},
          {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}}};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("meshdiff_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Four small shapes of distinct classes, quantized at `bits` with capacity `max_faces`.
inline meshdiff::DatasetFile tiny_dataset(int bits = 4, int max_faces = 20) {
  meshdiff::DatasetFile d;
  d.bits = bits;
  d.max_faces = max_faces;
  d.class_names = {"tetra", "pyramid", "octa", "cube"};
  const Mesh shapes[4] = {tetrahedron(), square_pyramid(), octahedron(), cube(0.4)};
  for (int c = 0; c < 4; ++c)
    d.add(meshdiff::canonical_order(meshdiff::quantize(meshdiff::normalize_mesh(shapes[c]), bits, max_faces, c)));
  return d;
}

}  // namespace testutil
