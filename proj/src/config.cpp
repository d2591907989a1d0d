#include "meshdiff/config.hpp"

#include <fstream>
#include <set>

#include "meshdiff/error.hpp"

namespace meshdiff {

using nlohmann::json;

void RunConfig::resolve() {
  dataset.seed = seed;
  train.seed = seed;
  eval.seed = seed;
  train.threads = threads;
  eval.threads = threads;
  train.scale_range = dataset.scale_range;
  model.max_faces = dataset.max_faces;
  model.categories = 1 << dataset.bits;
}

void RunConfig::validate() const {
  dataset.validate();
  model.validate();
  train.validate();
  if (threads < 1) throw ArgumentError("threads must be positive");
  if (schedule.steps < 1) throw ArgumentError("timesteps must be positive");
  if (sample.steps < 1 || sample.steps > schedule.steps) throw ArgumentError("sample.steps must be in [1, timesteps]");
  if (sample.count < 1) throw ArgumentError("sample.count must be positive");
  if (eval.points < 1 || eval.grid < 1) throw ArgumentError("eval.points and eval.grid must be positive");
  if (!(optimizer.base_lr > 0)) throw ArgumentError("learning rate must be positive");
}

json to_json(const RunConfig& c) {
  json model = to_json(c.model);
  model.erase("max_faces");
  model.erase("categories");
  model.erase("class_count");
  json optimizer = to_json(c.optimizer);
  optimizer.erase("warmup_steps");
  optimizer.erase("total_steps");
  json train = to_json(c.train);
  train.erase("seed");
  train.erase("scale_range");
  return {{"seed", c.seed},
          {"threads", c.threads},
          {"dataset",
           {{"decimation_angles", c.dataset.decimation_angles},
            {"hausdorff_threshold", c.dataset.hausdorff_threshold},
            {"hausdorff_samples", c.dataset.hausdorff_samples},
            {"train_fraction", c.dataset.train_fraction},
            {"max_faces", c.dataset.max_faces},
            {"bits", c.dataset.bits},
            {"categories", 1 << c.dataset.bits},
            {"scale_range", {c.dataset.scale_range.low, c.dataset.scale_range.high}}}},
          {"model", model},
          {"schedule", to_json(c.schedule)},
          {"optimizer", optimizer},
          {"train", train},
          {"sample",
           {{"steps", c.sample.steps},
            {"count", c.sample.count},
            {"class", c.sample.class_label},
            {"face_count", c.sample.face_count}}},
          {"eval",
           {{"points", c.eval.points}, {"grid", c.eval.grid}, {"metric_scale", c.eval.metric_scale}}}};
}

namespace {

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ArgumentError(std::string(section) + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.contains(key)) throw ArgumentError(std::string("unknown config key ") + section + "." + key);
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ScaleRange scale_range_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw ArgumentError("scale_range must have two entries");
  return {v[0], v[1]};
}

}  // namespace

RunConfig run_config_from_json(const json& j, RunConfig c) {
  try {
    check_keys(j, "config", {"seed", "threads", "dataset", "model", "schedule", "optimizer", "train", "sample", "eval"});
    take(j, "seed", c.seed);
    take(j, "threads", c.threads);
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      check_keys(d, "dataset",
                 {"decimation_angles", "hausdorff_threshold", "hausdorff_samples", "train_fraction", "max_faces", "bits",
                  "categories", "scale_range"});
      take(d, "decimation_angles", c.dataset.decimation_angles);
      take(d, "hausdorff_threshold", c.dataset.hausdorff_threshold);
      take(d, "hausdorff_samples", c.dataset.hausdorff_samples);
      take(d, "train_fraction", c.dataset.train_fraction);
      take(d, "max_faces", c.dataset.max_faces);
      take(d, "bits", c.dataset.bits);
      if (d.contains("scale_range")) c.dataset.scale_range = scale_range_from(d["scale_range"]);
      if (d.contains("categories") && d["categories"].get<int>() != (1 << c.dataset.bits))
        throw ArgumentError("dataset.categories must equal 2^bits");
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      check_keys(m, "model", {"embed_dim", "face_dim", "depth", "heads", "mlp_ratio", "skip_connections"});
      take(m, "embed_dim", c.model.embed_dim);
      take(m, "face_dim", c.model.face_dim);
      take(m, "depth", c.model.depth);
      take(m, "heads", c.model.heads);
      take(m, "mlp_ratio", c.model.mlp_ratio);
      take(m, "skip_connections", c.model.skip_connections);
    }
    if (j.contains("schedule")) {
      const json& s = j["schedule"];
      check_keys(s, "schedule", {"timesteps", "offset", "beta_clip"});
      take(s, "timesteps", c.schedule.steps);
      take(s, "offset", c.schedule.offset);
      take(s, "beta_clip", c.schedule.beta_clip);
    }
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      check_keys(o, "optimizer", {"base_lr", "weight_decay", "beta1", "beta2", "eps"});
      take(o, "base_lr", c.optimizer.base_lr);
      take(o, "weight_decay", c.optimizer.weight_decay);
      take(o, "beta1", c.optimizer.beta1);
      take(o, "beta2", c.optimizer.beta2);
      take(o, "eps", c.optimizer.eps);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t, "train", {"epochs", "batch_size", "max_steps", "warmup_fraction", "checkpoint_every", "augment"});
      take(t, "epochs", c.train.epochs);
      take(t, "batch_size", c.train.batch_size);
      take(t, "max_steps", c.train.max_steps);
      take(t, "warmup_fraction", c.train.warmup_fraction);
      take(t, "checkpoint_every", c.train.checkpoint_every);
      take(t, "augment", c.train.augment);
    }
    if (j.contains("sample")) {
      const json& s = j["sample"];
      check_keys(s, "sample", {"steps", "count", "class", "face_count"});
      take(s, "steps", c.sample.steps);
      take(s, "count", c.sample.count);
      take(s, "class", c.sample.class_label);
      take(s, "face_count", c.sample.face_count);
    }
    if (j.contains("eval")) {
      const json& e = j["eval"];
      check_keys(e, "eval", {"points", "grid", "metric_scale"});
      take(e, "points", c.eval.points);
      take(e, "grid", c.eval.grid);
      take(e, "metric_scale", c.eval.metric_scale);
    }
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("bad config value: ") + e.what());
  }
  c.resolve();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ArgumentError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace meshdiff
