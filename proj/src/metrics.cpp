#include "meshdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "meshdiff/error.hpp"
#include "meshdiff/obj_io.hpp"
#include "meshdiff/parallel.hpp"
#include "meshdiff/random.hpp"
#include "meshdiff/spatial.hpp"

namespace meshdiff {

namespace {

double directed(const PointCloud& from, const KdTree& to) {
  double total = 0;
  for (const Vec3& p : from.points) total += to.nearest_distance_squared(p);
  return total / static_cast<double>(from.points.size());
}

void require_points(const PointCloud& c) {
  if (c.points.empty()) throw ArgumentError("point cloud is empty");
}

std::vector<std::unique_ptr<KdTree>> build_trees(const std::vector<PointCloud>& clouds, int threads) {
  std::vector<std::unique_ptr<KdTree>> trees(clouds.size());
  parallel_for(clouds.size(), threads, [&](std::size_t i) {
    require_points(clouds[i]);
    trees[i] = std::make_unique<KdTree>(clouds[i].points);
  });
  return trees;
}

void require_sets(std::size_t gen, std::size_t ref, std::size_t minimum) {
  if (gen < minimum || ref < minimum)
    throw ArgumentError("need at least " + std::to_string(minimum) + " clouds in each set");
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  require_points(a);
  require_points(b);
  const KdTree ta(a.points), tb(b.points);
  return directed(a, tb) + directed(b, ta);
}

DistanceMatrix chamfer_matrix(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b, int threads) {
  const auto ta = build_trees(a, threads);
  const auto tb = build_trees(b, threads);
  DistanceMatrix d{a.size(), b.size(), std::vector<double>(a.size() * b.size())};
  parallel_for(d.values.size(), threads, [&](std::size_t k) {
    const std::size_t i = k / d.cols, j = k % d.cols;
    d.values[k] = directed(a[i], *tb[j]) + directed(b[j], *ta[i]);
  });
  return d;
}

double mmd(const DistanceMatrix& gr) {
  require_sets(gr.rows, gr.cols, 1);
  double total = 0;
  for (std::size_t r = 0; r < gr.cols; ++r) {
    double best = INFINITY;
    for (std::size_t g = 0; g < gr.rows; ++g) best = std::min(best, gr(g, r));
    total += best;
  }
  return total / static_cast<double>(gr.cols);
}

double coverage(const DistanceMatrix& gr) {
  require_sets(gr.rows, gr.cols, 1);
  std::vector<bool> covered(gr.cols, false);
  for (std::size_t g = 0; g < gr.rows; ++g) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < gr.cols; ++r)
      if (gr(g, r) < gr(g, best)) best = r;
    covered[best] = true;
  }
  return 100.0 * static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(gr.cols);
}

double one_nna(const DistanceMatrix& gg, const DistanceMatrix& rr, const DistanceMatrix& gr) {
  const std::size_t ng = gr.rows, nr = gr.cols;
  require_sets(ng, nr, 2);
  if (gg.rows != ng || gg.cols != ng || rr.rows != nr || rr.cols != nr)
    throw ArgumentError("distance matrix shapes disagree");
  const std::size_t n = ng + nr;
  auto dist = [&](std::size_t i, std::size_t j) {
    if (i < ng && j < ng) return gg(i, j);
    if (i >= ng && j >= ng) return rr(i - ng, j - ng);
    return i < ng ? gr(i, j - ng) : gr(j, i - ng);
  };
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = n;
    double best_d = INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = dist(i, j);
      if (best == n || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    if ((best < ng) == (i < ng)) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

double mmd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int threads) {
  require_sets(gen.size(), ref.size(), 1);
  return mmd(chamfer_matrix(gen, ref, threads));
}

double coverage(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int threads) {
  require_sets(gen.size(), ref.size(), 1);
  return coverage(chamfer_matrix(gen, ref, threads));
}

double one_nna(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int threads) {
  require_sets(gen.size(), ref.size(), 2);
  return one_nna(chamfer_matrix(gen, gen, threads), chamfer_matrix(ref, ref, threads),
                 chamfer_matrix(gen, ref, threads));
}

namespace {

std::vector<double> occupancy(const std::vector<PointCloud>& clouds, int grid) {
  std::vector<double> h(static_cast<std::size_t>(grid) * grid * grid, 0.0);
  std::size_t count = 0;
  for (const PointCloud& c : clouds)
    for (const Vec3& p : c.points) {
      std::size_t index = 0;
      for (int a = 0; a < 3; ++a) {
        const double u = p[a];
        if (!(u >= -1.0 - 1e-9 && u <= 1.0 + 1e-9)) throw DomainError("point outside [-1, 1]^3");
        const int cell = std::clamp(static_cast<int>(std::floor((u + 1.0) * 0.5 * grid)), 0, grid - 1);
        index = index * static_cast<std::size_t>(grid) + static_cast<std::size_t>(cell);
      }
      h[index] += 1.0;
      ++count;
    }
  if (count == 0) throw ArgumentError("no points to histogram");
  for (double& v : h) v /= static_cast<double>(count);
  return h;
}

}  // namespace

double jsd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int grid) {
  if (grid < 1) throw ArgumentError("grid resolution must be positive");
  require_sets(gen.size(), ref.size(), 1);
  const std::vector<double> p = occupancy(gen, grid), q = occupancy(ref, grid);
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) total += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0) total += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(total, 0.0);
}

PointCloud normalize_cloud(const PointCloud& cloud) {
  require_points(cloud);
  const BoundingBox box = bounding_box(cloud.points);
  const Vec3 center = box.center();
  double half = 0;
  for (int a = 0; a < 3; ++a) half = std::max(half, 0.5 * (box.max[a] - box.min[a]));
  if (!(half > 0)) throw DegenerateInputError("point cloud has zero extent");
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) {
    Vec3 q = (p - center) * (1.0 / half);
    for (int a = 0; a < 3; ++a) q[a] = std::clamp(q[a], -1.0, 1.0);
    out.points.push_back(q);
  }
  return out;
}

nlohmann::json to_json(const EvalConfig& c) {
  return {{"points", c.points}, {"seed", c.seed}, {"grid", c.grid}, {"metric_scale", c.metric_scale}};
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json skipped_rows = nlohmann::json::array();
  for (const auto& s : skipped) skipped_rows.push_back({{"path", s.path}, {"error", s.error}});
  return {{"mmd", mmd},
          {"cov_percent", cov_percent},
          {"one_nna_percent", one_nna_percent},
          {"one_nna_degenerate", one_nna_degenerate},
          {"jsd", jsd},
          {"scale", {{"mmd", config.metric_scale}, {"jsd", config.metric_scale}}},
          {"chamfer", "mean squared nearest-neighbor distance, both directions summed"},
          {"jsd_log_base", "e"},
          {"config", meshdiff::to_json(config)},
          {"sizes", {{"gen", gen_count}, {"ref", ref_count}}},
          {"skipped", skipped_rows}};
}

std::vector<PointCloud> load_clouds(const std::filesystem::path& dir, const EvalConfig& config,
                                    std::vector<SkippedMesh>* skipped, std::vector<std::string>* names) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ArgumentError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".obj") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<PointCloud> clouds(files.size());
  std::vector<std::string> errors(files.size());
  parallel_for(files.size(), config.threads, [&](std::size_t i) {
    try {
      const Mesh mesh = read_obj_file(files[i]);
      const std::uint64_t seed = derive_key(config.seed, {fnv1a64(files[i].filename().string())});
      clouds[i] = normalize_cloud(sample_surface_points(mesh, static_cast<std::size_t>(config.points), seed));
    } catch (const std::exception& e) {
      errors[i] = e.what();
      if (errors[i].empty()) errors[i] = "unusable mesh";
    }
  });
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!errors[i].empty()) {
      if (skipped) skipped->push_back({files[i].string(), errors[i]});
      continue;
    }
    out.push_back(std::move(clouds[i]));
    if (names) names->push_back(files[i].filename().string());
  }
  return out;
}

MetricsReport evaluate(const std::filesystem::path& gen_dir, const std::filesystem::path& ref_dir,
                       const EvalConfig& config) {
  if (config.points < 1) throw ArgumentError("points must be positive");
  MetricsReport report;
  report.config = config;
  const std::vector<PointCloud> gen = load_clouds(gen_dir, config, &report.skipped);
  const std::vector<PointCloud> ref = load_clouds(ref_dir, config, &report.skipped);
  report.gen_count = gen.size();
  report.ref_count = ref.size();
  if (gen.size() < 2) throw ArgumentError("fewer than two usable meshes in " + gen_dir.string());
  if (ref.size() < 2) throw ArgumentError("fewer than two usable meshes in " + ref_dir.string());

  const DistanceMatrix gr = chamfer_matrix(gen, ref, config.threads);
  report.mmd = mmd(gr) * config.metric_scale;
  report.cov_percent = coverage(gr);
  report.one_nna_percent = one_nna(chamfer_matrix(gen, gen, config.threads), chamfer_matrix(ref, ref, config.threads), gr);
  report.one_nna_degenerate = std::any_of(gr.values.begin(), gr.values.end(), [](double d) { return d == 0.0; });
  report.jsd = jsd(gen, ref, config.grid) * config.metric_scale;
  return report;
}

}  // namespace meshdiff
