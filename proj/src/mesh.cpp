#include "meshdiff/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "meshdiff/error.hpp"
#include "meshdiff/random.hpp"

namespace meshdiff {

namespace {

constexpr double kNormalizedSlack = 1e-9;

using Triplet = std::array<std::uint16_t, 3>;

Triplet vertex_codes(const FaceCodes& f, int k) { return {f[3 * k], f[3 * k + 1], f[3 * k + 2]}; }

// Ordering key of a quantized vertex: z first, then y, then x.
std::array<std::uint16_t, 3> zyx(const Triplet& t) { return {t[2], t[1], t[0]}; }

FaceCodes rotate_smallest_first(const FaceCodes& f) {
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (zyx(vertex_codes(f, k)) < zyx(vertex_codes(f, best))) best = k;
  FaceCodes out{};
  for (int k = 0; k < 3; ++k)
    for (int h = 0; h < 3; ++h) out[3 * k + h] = f[3 * ((k + best) % 3) + h];
  return out;
}

// Lexicographic key over the nine categories, each vertex in (z, y, x) order.
std::array<std::uint16_t, 9> face_key(const FaceCodes& f) {
  std::array<std::uint16_t, 9> key{};
  for (int k = 0; k < 3; ++k)
    for (int h = 0; h < 3; ++h) key[3 * k + h] = f[3 * k + (2 - h)];
  return key;
}

bool collapsed(const FaceCodes& f) {
  const Triplet a = vertex_codes(f, 0), b = vertex_codes(f, 1), c = vertex_codes(f, 2);
  return a == b || b == c || a == c;
}

}  // namespace

void Mesh::validate() const {
  if (!faces.empty() && vertices.size() < 3)
    throw StructuralError("mesh with faces needs at least 3 vertices");
  for (std::size_t j = 0; j < faces.size(); ++j) {
    const Face& f = faces[j];
    for (std::uint32_t i : f)
      if (i >= vertices.size())
        throw StructuralError("face " + std::to_string(j) + " references vertex " + std::to_string(i) +
                              " of " + std::to_string(vertices.size()));
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      throw StructuralError("face " + std::to_string(j) + " repeats a vertex index");
  }
}

QuantizedTriangleSoup QuantizedTriangleSoup::empty(int bits, int max_faces, int class_label) {
  if (bits < 1 || bits > 16) throw ArgumentError("bits must be in [1, 16]");
  if (max_faces < 1) throw ArgumentError("max_faces must be positive");
  if (class_label < 0) throw ArgumentError("class label must be non-negative");
  QuantizedTriangleSoup soup;
  soup.bits = bits;
  soup.class_label = class_label;
  soup.faces.assign(static_cast<std::size_t>(max_faces), FaceCodes{});
  soup.mask.assign(static_cast<std::size_t>(max_faces), 0);
  return soup;
}

int QuantizedTriangleSoup::face_count() const {
  return static_cast<int>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

void QuantizedTriangleSoup::push_face(const FaceCodes& codes) {
  auto it = std::find(mask.begin(), mask.end(), std::uint8_t{0});
  if (it == mask.end()) throw CapacityError("soup is full (" + std::to_string(max_faces()) + " faces)");
  const auto slot = static_cast<std::size_t>(it - mask.begin());
  faces[slot] = codes;
  *it = 1;
}

void QuantizedTriangleSoup::validate() const {
  if (bits < 1 || bits > 16) throw ArgumentError("bits must be in [1, 16]");
  if (faces.size() != mask.size()) throw ArgumentError("face and mask lengths differ");
  if (class_label < 0) throw ArgumentError("negative class label");
  const int c = categories();
  for (std::size_t j = 0; j < faces.size(); ++j) {
    for (std::uint16_t v : faces[j]) {
      if (v >= c) throw DomainError("category " + std::to_string(v) + " out of range in face " + std::to_string(j));
      if (!mask[j] && v != 0) throw DomainError("padded face " + std::to_string(j) + " is not zero");
    }
  }
}

BoundingBox bounding_box(std::span<const Vec3> points) {
  BoundingBox box{points.front(), points.front()};
  for (const Vec3& p : points) {
    for (int a = 0; a < 3; ++a) {
      box.min[a] = std::min(box.min[a], p[a]);
      box.max[a] = std::max(box.max[a], p[a]);
    }
  }
  return box;
}

Mesh normalize_mesh(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw DegenerateInputError("mesh has no vertices");
  const BoundingBox box = bounding_box(mesh.vertices);
  const double diag = box.diagonal();
  if (!(diag > 0) || !std::isfinite(diag)) throw DegenerateInputError("bounding box diagonal is zero");
  const Vec3 center = box.center();
  Mesh out = mesh;
  for (Vec3& v : out.vertices) {
    v = (v - center) / diag;
    for (int a = 0; a < 3; ++a) v[a] = std::clamp(v[a], -0.5, 0.5);
  }
  return out;
}

std::uint16_t quantize_coordinate(double u, int bits) {
  const double scaled = std::floor((u + 0.5) * static_cast<double>(1 << bits));
  const double top = static_cast<double>((1 << bits) - 1);
  return static_cast<std::uint16_t>(std::clamp(scaled, 0.0, top));
}

double dequantize_coordinate(std::uint16_t c, int bits) {
  return (static_cast<double>(c) + 0.5) / static_cast<double>(1 << bits) - 0.5;
}

QuantizedTriangleSoup quantize(const Mesh& mesh, int bits, int max_faces, int class_label) {
  mesh.validate();
  QuantizedTriangleSoup soup = QuantizedTriangleSoup::empty(bits, max_faces, class_label);
  std::vector<Triplet> codes;
  codes.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) {
    Triplet t{};
    for (int a = 0; a < 3; ++a) {
      if (!(std::abs(v[a]) <= 0.5 + kNormalizedSlack))
        throw DomainError("coordinate " + std::to_string(v[a]) + " outside the normalized range [-0.5, 0.5]");
      t[a] = quantize_coordinate(v[a], bits);
    }
    codes.push_back(t);
  }

  std::set<FaceCodes> seen;
  std::vector<FaceCodes> kept;
  for (const Face& f : mesh.faces) {
    FaceCodes fc{};
    for (int k = 0; k < 3; ++k)
      for (int h = 0; h < 3; ++h) fc[3 * k + h] = codes[f[k]][h];
    if (collapsed(fc)) continue;
    if (!seen.insert(rotate_smallest_first(fc)).second) continue;
    kept.push_back(fc);
  }
  if (static_cast<int>(kept.size()) > max_faces)
    throw CapacityError(std::to_string(kept.size()) + " faces exceed the capacity of " + std::to_string(max_faces));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    soup.faces[j] = kept[j];
    soup.mask[j] = 1;
  }
  return soup;
}

Mesh soup_to_mesh(const QuantizedTriangleSoup& soup) {
  soup.validate();
  Mesh mesh;
  std::map<Triplet, std::uint32_t> index;
  auto vertex_index = [&](const Triplet& t) {
    auto [it, inserted] = index.try_emplace(t, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (inserted)
      mesh.vertices.push_back({dequantize_coordinate(t[0], soup.bits), dequantize_coordinate(t[1], soup.bits),
                               dequantize_coordinate(t[2], soup.bits)});
    return it->second;
  };
  for (std::size_t j = 0; j < soup.faces.size(); ++j) {
    if (!soup.mask[j] || collapsed(soup.faces[j])) continue;
    const FaceCodes& f = soup.faces[j];
    mesh.faces.push_back({vertex_index(vertex_codes(f, 0)), vertex_index(vertex_codes(f, 1)),
                          vertex_index(vertex_codes(f, 2))});
  }
  if (mesh.faces.empty()) throw EmptyMeshError("soup has no non-degenerate faces");
  return mesh;
}

QuantizedTriangleSoup canonical_order(const QuantizedTriangleSoup& soup) {
  std::vector<FaceCodes> real;
  for (std::size_t j = 0; j < soup.faces.size(); ++j)
    if (soup.mask[j]) real.push_back(rotate_smallest_first(soup.faces[j]));
  std::sort(real.begin(), real.end(),
            [](const FaceCodes& a, const FaceCodes& b) { return face_key(a) < face_key(b); });
  QuantizedTriangleSoup out = QuantizedTriangleSoup::empty(soup.bits, soup.max_faces(), soup.class_label);
  for (std::size_t j = 0; j < real.size(); ++j) {
    out.faces[j] = real[j];
    out.mask[j] = 1;
  }
  return out;
}

PointCloud sample_surface_points(const Mesh& mesh, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ArgumentError("sample count must be positive");
  mesh.validate();
  std::vector<double> cdf;
  cdf.reserve(mesh.faces.size());
  double total = 0;
  for (const Face& f : mesh.faces) {
    total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    cdf.push_back(total);
  }
  if (!(total > 0)) throw DegenerateInputError("mesh has no face with positive area");

  Rng rng(seed, {0x5A4D504Cu});
  PointCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
    if (it == cdf.end()) --it;
    const Face& f = mesh.faces[static_cast<std::size_t>(it - cdf.begin())];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec3 a = mesh.vertices[f[0]], b = mesh.vertices[f[1]], c = mesh.vertices[f[2]];
    cloud.points.push_back(a * (1 - r1) + b * (r1 * (1 - r2)) + c * (r1 * r2));
  }
  return cloud;
}

}  // namespace meshdiff
