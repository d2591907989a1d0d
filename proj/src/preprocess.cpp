#include "meshdiff/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "meshdiff/error.hpp"
#include "meshdiff/obj_io.hpp"
#include "meshdiff/parallel.hpp"
#include "meshdiff/random.hpp"
#include "meshdiff/spatial.hpp"

namespace meshdiff {

namespace fs = std::filesystem;

std::vector<double> default_decimation_angles() {
  std::vector<double> angles;
  for (int i = 0; i < 30; ++i) angles.push_back(1.0 + 59.0 * i / 29.0);
  return angles;
}

void DatasetConfig::validate() const {
  if (!(train_fraction > 0 && train_fraction < 1)) throw ArgumentError("train_fraction must be in (0, 1)");
  if (!(scale_range.low > 0 && scale_range.low <= scale_range.high))
    throw ArgumentError("scale_range must satisfy 0 < low <= high");
  if (decimation_angles.empty()) throw ArgumentError("at least one decimation angle is required");
  for (double a : decimation_angles)
    if (!(a > 0 && a < 90)) throw ArgumentError("decimation angles must lie in (0, 90) degrees");
  if (!(hausdorff_threshold >= 0)) throw ArgumentError("hausdorff_threshold must be non-negative");
  if (hausdorff_samples < 1) throw ArgumentError("hausdorff_samples must be positive");
  if (max_faces < 1 || max_faces > 65535) throw ArgumentError("max_faces must be in [1, 65535]");
  if (bits < 1 || bits > 16) throw ArgumentError("bits must be in [1, 16]");
}

namespace {

// Largest distance from `from` samples to the surface of `to`. The exact
// sample-to-sample distance is also consulted so identical inputs give 0.
double directed_distance(const PointCloud& from, const TriangleBvh& to_surface, const KdTree& to_samples) {
  double worst = 0;
  for (const Vec3& p : from.points) {
    const double d2 = std::min(to_surface.distance_squared(p), to_samples.nearest_distance_squared(p));
    worst = std::max(worst, d2);
  }
  return std::sqrt(worst);
}

}  // namespace

double hausdorff_distance(const Mesh& a, const Mesh& b, int samples, std::uint64_t seed) {
  if (samples < 1) throw ArgumentError("samples must be positive");
  const PointCloud pa = sample_surface_points(a, static_cast<std::size_t>(samples), seed);
  const PointCloud pb = sample_surface_points(b, static_cast<std::size_t>(samples), seed);
  const TriangleBvh bvh_a(a), bvh_b(b);
  const KdTree tree_a(pa.points), tree_b(pb.points);
  return std::max(directed_distance(pa, bvh_b, tree_b), directed_distance(pb, bvh_a, tree_a));
}

Vec3 draw_scale_factors(ScaleRange range, std::uint64_t seed) {
  Rng rng(seed, {0x5CA1Eu});
  Vec3 s;
  for (int a = 0; a < 3; ++a) s[a] = rng.uniform(range.low, range.high);
  return s;
}

Mesh augment_scale(const Mesh& mesh, ScaleRange range, std::uint64_t seed) {
  const Vec3 s = draw_scale_factors(range, seed);
  Mesh out = mesh;
  for (Vec3& v : out.vertices)
    for (int a = 0; a < 3; ++a) v[a] *= s[a];
  return normalize_mesh(out);
}

namespace {

struct SourceMesh {
  fs::path path;
  int class_id;
};

struct SourceOutcome {
  std::vector<QuantizedTriangleSoup> variants;
  std::string error;  // non-empty when the file could not be used at all
  int rejected_hausdorff = 0;
  int rejected_capacity = 0;
  int rejected_empty = 0;
  int duplicates = 0;
  int decimation_failures = 0;
  double max_kept_hausdorff = 0;
};

SourceOutcome process_source(const SourceMesh& src, const DatasetConfig& cfg, std::uint64_t source_seed) {
  SourceOutcome out;
  Mesh normalized;
  try {
    normalized = normalize_mesh(read_obj_file(src.path));
  } catch (const Error& e) {
    out.error = e.what();
    return out;
  }
  std::set<std::vector<FaceCodes>> seen;
  for (double angle : cfg.decimation_angles) {
    DecimationLog log;
    const Mesh decimated = planar_decimate(normalized, angle, &log);
    out.decimation_failures += log.failed;
    if (static_cast<int>(decimated.faces.size()) > cfg.max_faces) {
      ++out.rejected_capacity;
      continue;
    }
    double hd = 0;
    try {
      hd = hausdorff_distance(normalized, decimated, cfg.hausdorff_samples, source_seed);
    } catch (const DegenerateInputError&) {
      ++out.rejected_empty;
      continue;
    }
    if (hd > cfg.hausdorff_threshold) {
      ++out.rejected_hausdorff;
      continue;
    }
    QuantizedTriangleSoup soup;
    try {
      soup = canonical_order(quantize(normalize_mesh(decimated), cfg.bits, cfg.max_faces, src.class_id));
    } catch (const CapacityError&) {
      ++out.rejected_capacity;
      continue;
    } catch (const DegenerateInputError&) {
      ++out.rejected_empty;
      continue;
    }
    if (soup.face_count() == 0) {
      ++out.rejected_empty;
      continue;
    }
    std::vector<FaceCodes> key(soup.faces.begin(), soup.faces.begin() + soup.face_count());
    if (!seen.insert(std::move(key)).second) {
      ++out.duplicates;
      continue;
    }
    out.max_kept_hausdorff = std::max(out.max_kept_hausdorff, hd);
    out.variants.push_back(std::move(soup));
  }
  return out;
}

bool has_obj_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".obj";
}

}  // namespace

BuildResult build_dataset(const fs::path& input_dir, const DatasetConfig& config, int threads) {
  config.validate();
  if (!fs::is_directory(input_dir)) throw ArgumentError("input directory not found: " + input_dir.string());

  std::vector<std::string> class_names;
  for (const auto& entry : fs::directory_iterator(input_dir))
    if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
  std::sort(class_names.begin(), class_names.end());

  std::vector<SourceMesh> sources;
  std::vector<std::string> used_classes;
  for (const std::string& name : class_names) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(input_dir / name))
      if (entry.is_regular_file() && has_obj_extension(entry.path())) files.push_back(entry.path());
    if (files.empty()) continue;
    std::sort(files.begin(), files.end());
    const int id = static_cast<int>(used_classes.size());
    used_classes.push_back(name);
    for (auto& f : files) sources.push_back({f, id});
  }
  if (used_classes.empty()) throw Error("no OBJ files found under " + input_dir.string());
  if (used_classes.size() > 65535) throw CapacityError("too many classes");

  std::vector<SourceOutcome> outcomes(sources.size());
  parallel_for(sources.size(), threads, [&](std::size_t i) {
    const std::uint64_t source_seed = derive_key(config.seed, {0x4844u, i});
    outcomes[i] = process_source(sources[i], config, source_seed);
  });

  // Split retained sources per class.
  std::vector<bool> in_train(sources.size(), false);
  for (std::size_t c = 0; c < used_classes.size(); ++c) {
    std::vector<std::size_t> retained;
    for (std::size_t i = 0; i < sources.size(); ++i)
      if (sources[i].class_id == static_cast<int>(c) && !outcomes[i].variants.empty()) retained.push_back(i);
    Rng rng(config.seed, {0x53504C54u, c});
    std::shuffle(retained.begin(), retained.end(), rng);
    std::size_t n_train = retained.size();
    if (retained.size() >= 2) {
      const auto want = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(retained.size())));
      n_train = std::clamp<std::size_t>(want, 1, retained.size() - 1);
    }
    for (std::size_t k = 0; k < n_train; ++k) in_train[retained[k]] = true;
  }

  BuildResult result;
  for (DatasetFile* f : {&result.train, &result.test}) {
    f->bits = config.bits;
    f->max_faces = config.max_faces;
    f->class_names = used_classes;
  }

  nlohmann::json classes = nlohmann::json::object();
  for (const auto& name : used_classes)
    classes[name] = {{"sources", 0}, {"retained", 0}, {"rejected", 0}, {"skipped", 0},
                     {"train_sources", 0}, {"test_sources", 0}, {"train_records", 0}, {"test_records", 0}};
  nlohmann::json rejected = nlohmann::json::array();
  nlohmann::json skipped = nlohmann::json::array();
  int variants_hausdorff = 0, variants_capacity = 0, variants_empty = 0, duplicates = 0, failures = 0;
  double max_kept_hd = 0;
  std::size_t retained_sources = 0;

  for (std::size_t i = 0; i < sources.size(); ++i) {
    const SourceOutcome& o = outcomes[i];
    auto& cls = classes[used_classes[static_cast<std::size_t>(sources[i].class_id)]];
    cls["sources"] = cls["sources"].get<int>() + 1;
    const std::string rel = fs::relative(sources[i].path, input_dir).generic_string();
    if (!o.error.empty()) {
      cls["skipped"] = cls["skipped"].get<int>() + 1;
      skipped.push_back({{"path", rel}, {"error", o.error}});
      continue;
    }
    variants_hausdorff += o.rejected_hausdorff;
    variants_capacity += o.rejected_capacity;
    variants_empty += o.rejected_empty;
    duplicates += o.duplicates;
    failures += o.decimation_failures;
    if (o.variants.empty()) {
      cls["rejected"] = cls["rejected"].get<int>() + 1;
      rejected.push_back(rel);
      continue;
    }
    ++retained_sources;
    max_kept_hd = std::max(max_kept_hd, o.max_kept_hausdorff);
    cls["retained"] = cls["retained"].get<int>() + 1;
    const char* split = in_train[i] ? "train" : "test";
    cls[std::string(split) + "_sources"] = cls[std::string(split) + "_sources"].get<int>() + 1;
    cls[std::string(split) + "_records"] =
        cls[std::string(split) + "_records"].get<int>() + static_cast<int>(o.variants.size());
    DatasetFile& target = in_train[i] ? result.train : result.test;
    for (const auto& soup : o.variants) target.add(soup);
  }
  if (retained_sources == 0) throw Error("no mesh survived preprocessing");

  result.report = {
      {"classes", classes},
      {"rejected_sources", rejected},
      {"skipped_files", skipped},
      {"records", {{"train", result.train.records.size()}, {"test", result.test.records.size()}}},
      {"rejected_variants",
       {{"hausdorff", variants_hausdorff}, {"capacity", variants_capacity}, {"empty", variants_empty}}},
      {"duplicate_variants", duplicates},
      {"decimation_cluster_failures", failures},
      {"hausdorff",
       {{"threshold", config.hausdorff_threshold},
        {"samples", config.hausdorff_samples},
        {"max_retained", max_kept_hd},
        {"method", "surface samples of each mesh against the other mesh's surface; approximate (sampled) estimate"}}},
  };
  return result;
}

}  // namespace meshdiff
