#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "meshdiff/error.hpp"
#include "meshdiff/metrics.hpp"
#include "meshdiff/obj_io.hpp"
#include "meshdiff/random.hpp"

using namespace meshdiff;

namespace {

double brute_chamfer(const PointCloud& a, const PointCloud& b) {
  auto directed = [](const PointCloud& x, const PointCloud& y) {
    double sum = 0;
    for (const Vec3& p : x.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : y.points) best = std::min(best, dot(p - q, p - q));
      sum += best;
    }
    return sum / static_cast<double>(x.points.size());
  };
  return directed(a, b) + directed(b, a);
}

PointCloud random_cloud(Rng& rng, std::size_t n, Vec3 center = {0, 0, 0}, double spread = 1.0) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back(center + Vec3{rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-spread, spread)});
  return c;
}

using Table = std::vector<std::vector<double>>;

Table brute_table(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b) {
  Table t(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) t[i][j] = brute_chamfer(a[i], b[j]);
  return t;
}

double brute_mmd(const Table& gr) {
  double sum = 0;
  for (std::size_t r = 0; r < gr[0].size(); ++r) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gr.size(); ++g) best = std::min(best, gr[g][r]);
    sum += best;
  }
  return sum / static_cast<double>(gr[0].size());
}

double brute_cov(const Table& gr) {
  std::vector<bool> hit(gr[0].size(), false);
  for (const auto& row : gr) hit[static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin())] = true;
  return 100.0 * static_cast<double>(std::count(hit.begin(), hit.end(), true)) / static_cast<double>(hit.size());
}

double brute_nna(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref) {
  std::vector<PointCloud> all = gen;
  all.insert(all.end(), ref.begin(), ref.end());
  int correct = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::size_t best = all.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < all.size(); ++j) {
      if (j == i) continue;
      const double d = brute_chamfer(all[i], all[j]);
      if (d < best_d) best_d = d, best = j;
    }
    correct += (best < gen.size()) == (i < gen.size());
  }
  return 100.0 * correct / static_cast<double>(all.size());
}

double voxel_center(int i, int grid) { return -1.0 + (i + 0.5) * 2.0 / grid; }

}  // namespace

TEST_CASE("chamfer examples and invariances") {
  const PointCloud a{{{0, 0, 0}}}, b{{{1, 0, 0}, {0, 2, 0}}};
  CHECK(chamfer(a, b) == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(chamfer(b, a) == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(chamfer(b, b) == 0.0);
  CHECK_THROWS_AS(chamfer(PointCloud{}, b), ArgumentError);

  Rng rng(4, {});
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud x = random_cloud(rng, 50 + rng.below(50)), y = random_cloud(rng, 30 + rng.below(80));
    const double d = chamfer(x, y);
    CHECK(std::abs(d - brute_chamfer(x, y)) < 1e-12);
    std::reverse(x.points.begin(), x.points.end());
    std::rotate(y.points.begin(), y.points.begin() + 7, y.points.end());
    CHECK(std::abs(chamfer(x, y) - d) < 1e-12);
    // Rotation about z plus translation, applied to both.
    const double th = rng.uniform(0, 6.28), c = std::cos(th), s = std::sin(th);
    const Vec3 shift{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    auto move = [&](PointCloud p) {
      for (Vec3& v : p.points) v = Vec3{c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]} + shift;
      return p;
    };
    CHECK(std::abs(chamfer(move(x), move(y)) - d) < 1e-9);
  }
}

TEST_CASE("pairwise metrics match brute force on small instances") {
  Rng rng(12, {});
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t ng = 2 + rng.below(4), nr = 2 + rng.below(4);
    std::vector<PointCloud> gen, ref;
    for (std::size_t i = 0; i < ng; ++i) gen.push_back(random_cloud(rng, 20, {rng.uniform(-1, 1), 0, 0}, 0.3));
    for (std::size_t i = 0; i < nr; ++i) ref.push_back(random_cloud(rng, 20, {rng.uniform(-1, 1), 0, 0}, 0.3));
    const Table gr = brute_table(gen, ref);
    CHECK(std::abs(mmd(gen, ref) - brute_mmd(gr)) < 1e-9);
    CHECK(coverage(gen, ref) == brute_cov(gr));
    CHECK(one_nna(gen, ref, 2) == brute_nna(gen, ref));
    const DistanceMatrix m = chamfer_matrix(gen, ref, 3);
    for (std::size_t i = 0; i < ng; ++i)
      for (std::size_t j = 0; j < nr; ++j) CHECK(std::abs(m(i, j) - gr[i][j]) < 1e-12);
  }
}

TEST_CASE("mmd, coverage and 1-NNA properties") {
  Rng rng(2, {});
  std::vector<PointCloud> ref;
  for (int i = 0; i < 5; ++i) ref.push_back(random_cloud(rng, 30, {2.0 * i, 0, 0}, 0.2));
  CHECK(mmd(ref, ref) == 0.0);
  CHECK(coverage(ref, ref) == 100.0);
  CHECK(coverage(std::vector<PointCloud>{ref[2]}, ref) == 20.0);

  std::vector<PointCloud> gen{random_cloud(rng, 30, {0.5, 0, 0}, 0.2), random_cloud(rng, 30, {6.2, 0, 0}, 0.2)};
  const double base = mmd(gen, ref);
  auto more = gen;
  more.push_back(gen[0]);
  CHECK(mmd(more, ref) <= base);

  // Hand-built 3 x 3 coverage: gens 0 and 1 both pick ref 0, gen 2 picks ref 2.
  const DistanceMatrix gr{3, 3, {1, 2, 3, 0.5, 0.9, 0.7, 4, 4, 1}};
  CHECK(coverage(gr) == doctest::Approx(200.0 / 3));
  const DistanceMatrix tie{2, 3, {1, 1, 2, 3, 2, 2}};
  CHECK(coverage(tie) == doctest::Approx(200.0 / 3));  // refs 0 and 1

  // Copies of one ref far from the rest: every cloud's neighbor is in its own set except ref 0.
  std::vector<PointCloud> far_ref{random_cloud(rng, 30, {10, 0, 0}, 0.2)};
  for (int i = 1; i < 4; ++i) far_ref.push_back(random_cloud(rng, 30, {0, 0, 0.5 * i}, 0.2));
  const std::vector<PointCloud> copies(4, far_ref[0]);
  CHECK(one_nna(copies, far_ref) == brute_nna(copies, far_ref));

  auto shuffled_gen = gen, shuffled_ref = ref;
  std::reverse(shuffled_gen.begin(), shuffled_gen.end());
  std::rotate(shuffled_ref.begin(), shuffled_ref.begin() + 2, shuffled_ref.end());
  CHECK(mmd(shuffled_gen, shuffled_ref) == doctest::Approx(base).epsilon(1e-15));
  CHECK(one_nna(gen, ref) == one_nna(shuffled_gen, shuffled_ref));
  CHECK_THROWS_AS(mmd(std::vector<PointCloud>{}, ref), ArgumentError);
  CHECK_THROWS_AS(one_nna(std::vector<PointCloud>{ref[0]}, ref), ArgumentError);
}

TEST_CASE("1-NNA is near 50 percent when both sets share a distribution") {
  double total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed, {7});
    std::vector<PointCloud> pool;
    for (int i = 0; i < 40; ++i) pool.push_back(random_cloud(rng, 64));
    const std::vector<PointCloud> gen(pool.begin(), pool.begin() + 20), ref(pool.begin() + 20, pool.end());
    total += one_nna(gen, ref, 4);
  }
  CHECK(std::abs(total / 20 - 50.0) < 15.0);
}

TEST_CASE("jsd") {
  const int grid = 28;
  auto at = [&](int i, int j, int k) { return Vec3{voxel_center(i, grid), voxel_center(j, grid), voxel_center(k, grid)}; };
  const std::vector<PointCloud> a{{{at(1, 2, 3), at(1, 2, 3)}}, {{at(20, 5, 5)}}};
  CHECK(jsd(a, a, grid) == 0.0);

  const std::vector<PointCloud> b{{{at(7, 7, 7), at(8, 8, 8)}}};
  CHECK(jsd(a, b, grid) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // 3:1 against 1:1 over two voxels.
  const std::vector<PointCloud> p{{{at(0, 0, 0), at(0, 0, 0), at(0, 0, 0), at(27, 27, 27)}}};
  const std::vector<PointCloud> q{{{at(0, 0, 0), at(27, 27, 27)}}};
  const double m0 = 0.625, m1 = 0.375;
  const double expected = 0.5 * (0.75 * std::log(0.75 / m0) + 0.25 * std::log(0.25 / m1)) +
                          0.5 * (0.5 * std::log(0.5 / m0) + 0.5 * std::log(0.5 / m1));
  CHECK(std::abs(jsd(p, q, grid) - expected) < 1e-12);
  CHECK(jsd(p, q, grid) == jsd(q, p, grid));

  Rng rng(9, {});
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<PointCloud> x{random_cloud(rng, 200, {0, 0, 0}, 0.9)}, y{random_cloud(rng, 150, {0.1, 0, 0}, 0.8)};
    const double v = jsd(x, y, grid);
    CHECK(v >= 0.0);
    CHECK(v <= std::log(2.0) + 1e-12);
    CHECK(v == jsd(y, x, grid));
  }
  // Boundary points land in the outer voxels.
  CHECK(jsd({{{{1, 1, 1}}}}, {{{{at(27, 27, 27)}}}}, grid) == 0.0);
  CHECK_THROWS_AS(jsd({{{{1.5, 0, 0}}}}, b, grid), DomainError);
}

TEST_CASE("normalize_cloud is isotropic into [-1, 1]^3") {
  const PointCloud c{{{0, 0, 0}, {4, 1, 2}, {2, 0.5, 1}}};
  const PointCloud n = normalize_cloud(c);
  CHECK(n.points[0][0] == doctest::Approx(-1));
  CHECK(n.points[1][0] == doctest::Approx(1));
  CHECK(n.points[0][1] == doctest::Approx(-0.25));
  CHECK(n.points[1][2] == doctest::Approx(0.5));
  CHECK(n.points[2][0] == doctest::Approx(0));
  CHECK_THROWS_AS(normalize_cloud(PointCloud{{{1, 1, 1}, {1, 1, 1}}}), DegenerateInputError);
}

TEST_CASE("evaluate on directories") {
  const auto dir = testutil::temp_dir("eval");
  std::filesystem::create_directories(dir / "ref");
  std::filesystem::create_directories(dir / "gen");
  write_obj_file(dir / "ref" / "a.obj", testutil::tetrahedron());
  write_obj_file(dir / "ref" / "b.obj", testutil::octahedron());
  write_obj_file(dir / "ref" / "c.obj", testutil::square_pyramid());
  write_obj_file(dir / "gen" / "x.obj", testutil::cube());
  write_obj_file(dir / "gen" / "y.obj", testutil::tetrahedron());
  std::ofstream(dir / "gen" / "broken.obj") << "v 0 0 0\nf 1 2 3\n";

  EvalConfig cfg;
  cfg.points = 256;
  cfg.seed = 3;
  const MetricsReport self = evaluate(dir / "ref", dir / "ref", cfg);
  CHECK(self.mmd == 0.0);
  CHECK(self.cov_percent == 100.0);
  CHECK(self.jsd == 0.0);
  CHECK(self.one_nna_degenerate);

  const MetricsReport r = evaluate(dir / "gen", dir / "ref", cfg);
  CHECK(r.gen_count == 2);
  CHECK(r.ref_count == 3);
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0].path.find("broken.obj") != std::string::npos);
  CHECK(r.mmd > 0);
  CHECK(r.jsd > 0);
  cfg.threads = 4;
  const MetricsReport r4 = evaluate(dir / "gen", dir / "ref", cfg);
  cfg.threads = 1;
  CHECK(r4.mmd == r.mmd);
  CHECK(r4.one_nna_percent == r.one_nna_percent);
  CHECK(r4.jsd == r.jsd);
  const auto j = r.to_json();
  CHECK(j["chamfer"].is_string());
  CHECK(j["scale"]["mmd"] == 1000.0);
  CHECK(j["config"]["points"] == 256);

  std::filesystem::remove(dir / "gen" / "y.obj");
  CHECK_THROWS_AS(evaluate(dir / "gen", dir / "ref", cfg), ArgumentError);
  std::filesystem::remove_all(dir);
}
