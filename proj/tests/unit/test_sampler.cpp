#include <doctest.h>

#include <fstream>
#include <set>

#include "helpers.hpp"
#include "meshdiff/error.hpp"
#include "meshdiff/obj_io.hpp"
#include "meshdiff/sampler.hpp"
#include "meshdiff/trainer.hpp"

using namespace meshdiff;

namespace {

Checkpoint small_checkpoint(int epochs = 4) {
  const DatasetFile data = testutil::tiny_dataset();
  DenoiserConfig model;
  model.embed_dim = 4;
  model.face_dim = 16;
  model.depth = 2;
  model.heads = 2;
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 4;
  tc.seed = 3;
  return train(data, initial_checkpoint(data, model, ScheduleConfig{30}, OptimizerConfig{}, tc), tc).checkpoint;
}

std::vector<nlohmann::json> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<nlohmann::json> rows;
  std::string line;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("timestep sequences are strictly decreasing and end at 1") {
  CHECK(timestep_sequence(1000, 1) == std::vector<int>{1});
  CHECK(timestep_sequence(5, 5) == std::vector<int>{5, 4, 3, 2, 1});
  CHECK(timestep_sequence(5, 2) == std::vector<int>{5, 1});
  for (int total : {1, 2, 7, 50, 1000})
    for (int k = 1; k <= total; k += 1 + k / 3) {
      const auto seq = timestep_sequence(total, k);
      REQUIRE(seq.size() == static_cast<std::size_t>(k));
      CHECK(seq.back() == 1);
      if (k > 1) CHECK(seq.front() == total);
      for (std::size_t i = 1; i < seq.size(); ++i) CHECK(seq[i] < seq[i - 1]);
    }
  CHECK_THROWS_AS(timestep_sequence(10, 0), ArgumentError);
  CHECK_THROWS_AS(timestep_sequence(10, 11), ArgumentError);
}

TEST_CASE("face counts come from the class histogram") {
  const Checkpoint ckpt = small_checkpoint(1);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CHECK(draw_face_count(ckpt, 0, seed) == 4);
    CHECK(draw_face_count(ckpt, 3, seed) == 12);
  }
  Checkpoint mixed = ckpt;
  mixed.face_histograms[1].assign(mixed.face_histograms[1].size(), 0);
  mixed.face_histograms[1][2] = 1;
  mixed.face_histograms[1][7] = 3;
  std::set<int> seen;
  int sevens = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const int m = draw_face_count(mixed, 1, seed);
    seen.insert(m);
    sevens += m == 7;
  }
  CHECK(seen == std::set<int>{2, 7});
  CHECK(sevens > 250);
  CHECK(sevens < 350);
}

TEST_CASE("sample_soup range, mask and determinism") {
  const Checkpoint ckpt = small_checkpoint();
  for (int cls = 0; cls < 4; ++cls) {
    SampleRequest req;
    req.class_label = cls;
    req.seed = 17;
    const QuantizedTriangleSoup s = sample_soup(ckpt, req);
    CHECK_NOTHROW(s.validate());
    CHECK(s.max_faces() == 20);
    CHECK(s.face_count() == ckpt.model.max_faces - static_cast<int>(std::count(s.mask.begin(), s.mask.end(), 0)));
    CHECK(s.class_label == cls);
    for (int j = 0; j < s.max_faces(); ++j) {
      CHECK(bool(s.mask[static_cast<std::size_t>(j)]) == (j < s.face_count()));
      for (auto v : s.faces[static_cast<std::size_t>(j)]) CHECK(v < 16);
    }
    CHECK(sample_soup(ckpt, req) == s);
  }
  SampleRequest req;
  req.face_count = 9;
  req.steps = 7;
  const QuantizedTriangleSoup a = sample_soup(ckpt, req);
  CHECK(a.face_count() == 9);
  req.seed = 1;
  CHECK(sample_soup(ckpt, req) != a);
  req.threads = 4;
  req.seed = 0;
  CHECK(sample_soup(ckpt, req) == a);

  req.class_label = 4;
  CHECK_THROWS_AS(sample_soup(ckpt, req), ArgumentError);
  req.class_label = 0;
  req.steps = 31;
  CHECK_THROWS_AS(sample_soup(ckpt, req), ArgumentError);
  req.steps = 0;
  req.face_count = 21;
  CHECK_THROWS_AS(sample_soup(ckpt, req), ArgumentError);
}

TEST_CASE("reverse-step distributions of a trained model are normalized") {
  const Checkpoint ckpt = small_checkpoint();
  const Denoiser model(ckpt.model, ckpt.params);
  const NoiseSchedule s = ckpt.schedule.build();
  const DatasetFile data = testutil::tiny_dataset();
  for (int t = 2; t <= s.steps; t += 3) {
    const QuantizedTriangleSoup xt = sample_xt(data.soup(2), t, s, static_cast<std::uint64_t>(t));
    const LogitTensor logits = model.forward(xt, t, 2, s);
    for (int j = 0; j < xt.face_count(); ++j)
      for (int k = 0; k < 9; ++k) {
        const auto d = reverse_step_distribution(xt.faces[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)],
                                                 logits.slot(j, k), t, s);
        CHECK(std::abs(d.sum() - 1.0) < 1e-9);
        CHECK_NOTHROW(d.validate());
      }
  }
}

TEST_CASE("generate_batch writes files and a manifest, reproducibly") {
  const Checkpoint ckpt = small_checkpoint();
  SampleRequest req;
  req.count = 4;
  req.seed = 8;
  req.class_label = 3;
  const auto dir_a = testutil::temp_dir("gen_a"), dir_b = testutil::temp_dir("gen_b");
  const auto out_a = generate_batch(ckpt, req, dir_a);
  req.threads = 3;
  generate_batch(ckpt, req, dir_b);
  REQUIRE(out_a.size() == 4);
  const auto rows = read_manifest(dir_a / "manifest.jsonl");
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rows[i]["index"] == i);
    CHECK(rows[i]["seed"] == item_seed(8, i));
    CHECK(rows[i]["class"] == 3);
    CHECK(rows[i]["faces"] == out_a[i].faces);
    if (rows[i]["status"] == "ok") {
      const std::string name = rows[i]["path"];
      CHECK(name == out_a[i].path);
      CHECK_NOTHROW(read_obj_file(dir_a / name));
      CHECK(slurp(dir_a / name) == slurp(dir_b / name));
    } else {
      CHECK(rows[i]["path"].is_null());
    }
  }
  CHECK(slurp(dir_a / "manifest.jsonl") == slurp(dir_b / "manifest.jsonl"));
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("collapsed samples are recorded as failures") {
  Checkpoint ckpt = small_checkpoint(1);
  // Every coordinate predicts category 0, so every face collapses to a point.
  ckpt.params.head_w.setZero();
  ckpt.params.head_b.setZero();
  for (int k = 0; k < 9; ++k) ckpt.params.head_b(0, k * ckpt.model.categories) = 100.0;
  SampleRequest req;
  req.count = 2;
  req.steps = 1;
  const auto dir = testutil::temp_dir("gen_fail");
  const auto out = generate_batch(ckpt, req, dir);
  const auto rows = read_manifest(dir / "manifest.jsonl");
  REQUIRE(rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(out[i].path.empty());
    CHECK(rows[i]["path"].is_null());
    CHECK(rows[i]["status"].get<std::string>().rfind("failed", 0) == 0);
    CHECK_FALSE(std::filesystem::exists(dir / "sample_0000.obj"));
  }
  std::filesystem::remove_all(dir);
}
