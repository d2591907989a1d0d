#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "meshdiff/binary_io.hpp"
#include "meshdiff/error.hpp"
#include "meshdiff/obj_io.hpp"
#include "meshdiff/preprocess.hpp"

using namespace meshdiff;

TEST_CASE("default dataset settings") {
  const DatasetConfig c;
  REQUIRE(c.decimation_angles.size() == 30);
  CHECK(c.decimation_angles.front() == 1.0);
  CHECK(c.decimation_angles.back() == doctest::Approx(60.0));
  CHECK(c.train_fraction == 0.9);
  CHECK(c.max_faces == 800);
  CHECK(c.bits == 8);
  CHECK(c.scale_range.low == 0.75);
  CHECK(c.scale_range.high == 1.25);
  DatasetConfig bad;
  bad.train_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = DatasetConfig{};
  bad.decimation_angles = {95};
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("fan square decimates to two triangles") {
  DecimationLog log;
  const Mesh out = planar_decimate(testutil::fan_square(), 1.0, &log);
  CHECK(out.faces.size() == 2);
  CHECK(out.vertices.size() == 4);
  for (const Vec3& v : out.vertices) CHECK(!(v == Vec3{0, 0, 0}));
}

TEST_CASE("plain cube is unchanged at 1 degree") {
  const Mesh cube = testutil::cube();
  const Mesh out = planar_decimate(cube, 1.0);
  CHECK(out.faces.size() == 12);
  CHECK(out.vertices.size() == 8);
}

TEST_CASE("subdivided cube decimates to 12 faces at every angle") {
  const Mesh m = testutil::subdivided_cube();
  REQUIRE(m.faces.size() == 48);
  for (double angle : default_decimation_angles()) {
    const Mesh out = planar_decimate(m, angle);
    CHECK(out.faces.size() == 12);
    CHECK(out.vertices.size() == 8);
    CHECK(hausdorff_distance(m, out, 2000, 1) < 1e-6);
  }
}

TEST_CASE("decimation never adds faces or moves vertices") {
  const Mesh inputs[] = {testutil::subdivided_cube(), testutil::octahedron(), testutil::square_pyramid(),
                         testutil::fan_square()};
  for (const Mesh& m : inputs)
    for (double angle : {1.0, 10.0, 45.0, 60.0}) {
      const Mesh out = planar_decimate(m, angle);
      CHECK(out.faces.size() <= m.faces.size());
      CHECK_NOTHROW(out.validate());
      for (const Vec3& v : out.vertices)
        CHECK(std::find(m.vertices.begin(), m.vertices.end(), v) != m.vertices.end());
    }
}

TEST_CASE("hausdorff distance") {
  const Mesh m = testutil::octahedron();
  CHECK(hausdorff_distance(m, m, 1000, 5) == 0.0);

  Mesh a, b;
  a.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  a.faces = {{0, 1, 2}, {0, 2, 3}};
  b = a;
  const double d = 0.05;
  for (Vec3& v : b.vertices) v.z = d;
  const double h = hausdorff_distance(a, b, 10000, 2);
  CHECK(std::abs(h - d) < 0.05 * d);
  CHECK(hausdorff_distance(b, a, 10000, 2) == h);
}

TEST_CASE("scale augmentation") {
  const Vec3 s = draw_scale_factors({0.75, 1.25}, 1);
  for (int a = 0; a < 3; ++a) CHECK((s[a] >= 0.75 && s[a] <= 1.25));

  const int n = 10000;
  double sum[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const Vec3 f = draw_scale_factors({0.75, 1.25}, static_cast<std::uint64_t>(i));
    for (int a = 0; a < 3; ++a) sum[a] += f[a];
  }
  const double sigma = 0.5 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  for (int a = 0; a < 3; ++a) CHECK(std::abs(sum[a] / n - 1.0) < 3 * sigma);

  const Mesh m = normalize_mesh(testutil::square_pyramid());
  const Mesh same = augment_scale(m, {1.0, 1.0}, 3);
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    for (int a = 0; a < 3; ++a) CHECK(same.vertices[i][a] == doctest::Approx(m.vertices[i][a]).epsilon(1e-12));
  const Mesh scaled = augment_scale(m, {0.75, 1.25}, 3);
  CHECK(bounding_box(scaled.vertices).diagonal() == doctest::Approx(1.0));
}

namespace {

DatasetFile sample_dataset(int bits) {
  DatasetFile f;
  f.bits = bits;
  f.max_faces = 20;
  f.class_names = {"chair", "table"};
  f.add(quantize(normalize_mesh(testutil::octahedron()), bits, 20, 0));
  f.add(quantize(normalize_mesh(testutil::cube()), bits, 20, 1));
  return f;
}

}  // namespace

TEST_CASE("dataset files round trip byte-identically") {
  for (int bits : {4, 8, 10}) {
    const DatasetFile f = sample_dataset(bits);
    const auto bytes = serialize_dataset(f);
    const DatasetFile back = parse_dataset(bytes);
    CHECK(back == f);
    CHECK(serialize_dataset(back) == bytes);
  }
  const auto bytes = serialize_dataset(sample_dataset(8));
  // 4 magic + 2 + 1 + 2 + 2 + (2+5) + (2+5) + 4, then records of 4 + 9m bytes
  CHECK(bytes.size() == 29 + (4 + 9 * 8) + (4 + 9 * 12));
  CHECK(bytes[4] == 1);
  CHECK(bytes[6] == 8);
}

TEST_CASE("corrupt dataset files report byte offsets") {
  auto bytes = serialize_dataset(sample_dataset(8));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_dataset(bad_magic), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() - 1}) {
    try {
      parse_dataset(std::span(bytes).first(cut));
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() <= cut);
    }
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_dataset(trailing), FormatError);
}

TEST_CASE("build_dataset splits by source and reports rejects") {
  const auto root = testutil::temp_dir("build");
  const auto in = root / "in";
  std::filesystem::create_directories(in / "boxes");
  std::filesystem::create_directories(in / "gems");
  for (int i = 0; i < 5; ++i) {
    Mesh box = testutil::subdivided_cube(0.5);
    for (Vec3& v : box.vertices) v.x *= 1.0 + 0.2 * i;
    write_obj_file(in / "boxes" / ("box" + std::to_string(i) + ".obj"), box);
    Mesh gem = testutil::octahedron();
    for (Vec3& v : gem.vertices) v.z *= 1.0 + 0.3 * i;
    write_obj_file(in / "gems" / ("gem" + std::to_string(i) + ".obj"), gem);
  }
  {
    std::ofstream bad(in / "gems" / "broken.obj");
    bad << "v 1 2\n";
  }
  DatasetConfig c;
  c.decimation_angles = {1, 30};
  c.hausdorff_samples = 500;
  c.train_fraction = 0.6;
  c.max_faces = 60;
  c.seed = 4;
  const BuildResult r = build_dataset(in, c, 2);
  CHECK(r.train.class_names == std::vector<std::string>{"boxes", "gems"});
  CHECK(r.report["skipped_files"].size() == 1);
  CHECK(r.report["classes"]["boxes"]["train_sources"] == 3);
  CHECK(r.report["classes"]["boxes"]["test_sources"] == 2);
  for (const DatasetFile* f : {&r.train, &r.test})
    for (const auto& rec : f->records) {
      CHECK(rec.faces.size() <= 60u);
      for (const auto& face : rec.faces)
        for (auto v : face) CHECK(v < 256);
    }
  // Same build with another thread count is identical.
  const BuildResult again = build_dataset(in, c, 1);
  CHECK(serialize_dataset(again.train) == serialize_dataset(r.train));
  CHECK(serialize_dataset(again.test) == serialize_dataset(r.test));
  CHECK(again.report == r.report);
  std::filesystem::remove_all(root);
}

TEST_CASE("a source whose decimations all fail the Hausdorff filter is only reported") {
  const auto root = testutil::temp_dir("reject");
  std::filesystem::create_directories(root / "a");
  // A slightly bent fan: decimation at large angles flattens it noticeably.
  Mesh bent = testutil::fan_square();
  bent.vertices[4].z = 0.3;
  write_obj_file(root / "a" / "bent.obj", bent);
  write_obj_file(root / "a" / "flat.obj", testutil::tetrahedron());
  DatasetConfig c;
  c.decimation_angles = {50, 60};
  c.hausdorff_threshold = 1e-3;
  c.hausdorff_samples = 500;
  c.max_faces = 4;
  const BuildResult r = build_dataset(root, c, 1);
  bool listed = false;
  for (const auto& row : r.report["rejected_sources"]) listed = listed || row.get<std::string>().ends_with("bent.obj");
  CHECK(listed);
  std::filesystem::remove_all(root);
}
