#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "meshdiff/binary_io.hpp"
#include "meshdiff/checkpoint.hpp"
#include "meshdiff/config.hpp"
#include "meshdiff/error.hpp"
#include "meshdiff/metrics.hpp"
#include "meshdiff/preprocess.hpp"
#include "meshdiff/sampler.hpp"
#include "meshdiff/trainer.hpp"

namespace fs = std::filesystem;
using namespace meshdiff;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool out_required) {
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "random seed (overrides the config file)");
  cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  auto* out = cmd->add_option("--out", f.out, "output directory");
  if (out_required) out->required();
}

RunConfig resolve_config(const CommonFlags& f, const std::function<void(RunConfig&)>& overrides = {}) {
  try {
    RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    if (f.seed) c.seed = *f.seed;
    if (f.threads) c.threads = *f.threads;
    if (overrides) overrides(c);
    c.resolve();
    c.validate();
    return c;
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void echo_config(const fs::path& dir, const json& j) {
  fs::create_directories(dir);
  write_text(dir / "config.json", j.dump(2) + "\n");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- preprocess -------------------------------------------------------------

struct PreprocessArgs {
  CommonFlags common;
  std::string input;
};

int run_preprocess(const PreprocessArgs& a) {
  if (!fs::is_directory(a.input)) throw UsageError("input directory does not exist: " + a.input);
  const RunConfig c = resolve_config(a.common);
  const fs::path out = a.common.out;
  echo_config(out, to_json(c));
  const BuildResult r = build_dataset(a.input, c.dataset, c.threads);
  write_dataset_file(out / "train.pdds", r.train);
  write_dataset_file(out / "test.pdds", r.test);
  write_text(out / "report.json", r.report.dump(2) + "\n");
  std::cout << "train records: " << r.train.records.size() << ", test records: " << r.test.records.size() << "\n";
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  CommonFlags common;
  std::string data;
  std::string resume;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<long> max_steps;
  std::optional<double> lr;
  std::optional<int> timesteps;
};

std::string checkpoint_name(long epoch) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "ckpt_epoch_%06ld.pdck", epoch);
  return buf;
}

// Keeps the header and rows up to `step` so a resumed run continues the trace.
void truncate_trace(const fs::path& path, long step) {
  std::ostringstream kept;
  kept << "step,loss,lr\n";
  std::ifstream in(path);
  std::string line;
  bool header = true;
  while (in && std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (!line.empty() && std::stol(line.substr(0, line.find(','))) <= step) kept << line << "\n";
  }
  in.close();
  write_text(path, kept.str());
}

int run_train(const TrainArgs& a) {
  const RunConfig c = resolve_config(a.common, [&](RunConfig& c) {
    if (a.epochs) c.train.epochs = *a.epochs;
    if (a.batch_size) c.train.batch_size = *a.batch_size;
    if (a.max_steps) c.train.max_steps = *a.max_steps;
    if (a.lr) c.optimizer.base_lr = *a.lr;
    if (a.timesteps) c.schedule.steps = *a.timesteps;
  });
  const fs::path out = a.common.out;
  echo_config(out, to_json(c));
  const DatasetFile data = read_dataset_file(a.data);

  Checkpoint start;
  if (a.resume.empty()) {
    start = initial_checkpoint(data, c.model, c.schedule, c.optimizer, c.train);
  } else {
    start = read_checkpoint_file(a.resume);
    const Checkpoint fresh = initial_checkpoint(data, c.model, c.schedule, c.optimizer, c.train);
    if (fresh.model != start.model || fresh.schedule != start.schedule || fresh.training != start.training)
      throw ArgumentError("resume checkpoint was trained with a different configuration");
  }

  const fs::path trace_path = out / "loss.csv";
  truncate_trace(trace_path, start.step);
  std::ofstream trace(trace_path, std::ios::binary | std::ios::app);
  if (!trace) throw Error("cannot write " + trace_path.string());

  const long per_epoch = c.train.steps_per_epoch(data.records.size());
  TrainCallbacks cb;
  cb.on_step = [&](const TrainStep& s) {
    trace << s.step << ',' << format_double(s.loss) << ',' << format_double(s.lr) << '\n';
    if (s.step % per_epoch == 0 && (s.step / per_epoch) % 50 == 0)
      std::cerr << "epoch " << s.step / per_epoch << " step " << s.step << " loss " << s.loss << "\n";
  };
  cb.on_checkpoint = [&](const Checkpoint& ck) {
    trace.flush();
    write_checkpoint_file(out / checkpoint_name(ck.epoch), ck);
    write_checkpoint_file(out / "last.pdck", ck);
  };
  const TrainResult r = train(data, std::move(start), c.train, cb);
  trace.flush();
  if (r.diverged) {
    write_checkpoint_file(out / "last.pdck", r.checkpoint);
    std::cerr << "error: training diverged at " << r.error << "; last good checkpoint kept in last.pdck\n";
    return kExitFailure;
  }
  std::cout << "trained to step " << r.checkpoint.step << "\n";
  return kExitOk;
}

// ---- sample -----------------------------------------------------------------

struct SampleArgs {
  CommonFlags common;
  std::string checkpoint;
  std::string class_name;
  std::optional<int> count;
  std::optional<int> steps;
  std::optional<int> faces;
};

int resolve_class(const Checkpoint& ck, const std::string& name, int fallback) {
  if (name.empty()) return fallback;
  for (std::size_t i = 0; i < ck.class_names.size(); ++i)
    if (ck.class_names[i] == name) return static_cast<int>(i);
  int index = -1;
  const auto* end = name.data() + name.size();
  if (std::from_chars(name.data(), end, index).ptr == end && index >= 0 && index < ck.model.class_count) return index;
  throw ArgumentError("unknown class " + name);
}

int run_sample(const SampleArgs& a) {
  const Checkpoint ck = read_checkpoint_file(a.checkpoint);
  const RunConfig c = resolve_config(a.common, [&](RunConfig& c) {
    c.schedule = ck.schedule;
    if (!a.steps && c.sample.steps > ck.schedule.steps) c.sample.steps = ck.schedule.steps;
    if (a.steps) c.sample.steps = *a.steps;
    if (a.count) c.sample.count = *a.count;
    if (a.faces) c.sample.face_count = *a.faces;
  });
  const int label = resolve_class(ck, a.class_name, c.sample.class_label);
  json echoed = to_json(c);
  echoed["sample"]["class"] = label;
  echoed["sample"]["checkpoint"] = a.checkpoint;
  const fs::path out = a.common.out;
  echo_config(out, echoed);

  SampleRequest req;
  req.class_label = label;
  req.count = c.sample.count;
  req.steps = c.sample.steps;
  req.seed = c.seed;
  req.face_count = c.sample.face_count;
  req.threads = c.threads;
  const auto items = generate_batch(ck, req, out);
  int failed = 0;
  for (const auto& o : items)
    if (o.status != "ok") {
      ++failed;
      std::cerr << "sample " << o.index << ": " << o.status << "\n";
    }
  std::cout << items.size() - static_cast<std::size_t>(failed) << " of " << items.size() << " samples written\n";
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  CommonFlags common;
  std::string gen, ref;
  std::optional<int> points;
  std::optional<int> grid;
};

int run_eval(const EvalArgs& a) {
  for (const auto& d : {a.gen, a.ref})
    if (!fs::is_directory(d)) throw UsageError("not a directory: " + d);
  const RunConfig c = resolve_config(a.common, [&](RunConfig& c) {
    if (a.points) c.eval.points = *a.points;
    if (a.grid) c.eval.grid = *a.grid;
  });
  if (!a.common.out.empty()) echo_config(a.common.out, to_json(c));
  const MetricsReport report = evaluate(a.gen, a.ref, c.eval);
  for (const auto& s : report.skipped) std::cerr << "skipped " << s.path << ": " << s.error << "\n";
  json j = report.to_json();
  j["gen_dir"] = a.gen;
  j["ref_dir"] = a.ref;
  const std::string text = j.dump(2) + "\n";
  if (!a.common.out.empty()) write_text(fs::path(a.common.out) / "metrics.json", text);
  std::cout << text;
  return kExitOk;
}

// ---- inspect ----------------------------------------------------------------

struct InspectArgs {
  std::string path;
};

void print_histogram(const std::vector<std::uint32_t>& h) {
  bool any = false;
  for (std::size_t m = 0; m < h.size(); ++m)
    if (h[m]) {
      std::cout << (any ? " " : "    ") << m << ":" << h[m];
      any = true;
    }
  std::cout << (any ? "\n" : "    (none)\n");
}

int run_inspect(const InspectArgs& a) {
  const auto bytes = read_file_bytes(a.path);
  const std::string magic(bytes.begin(), bytes.begin() + static_cast<long>(std::min<std::size_t>(4, bytes.size())));
  if (magic == "PDDS") {
    const DatasetFile d = parse_dataset(bytes);
    std::cout << "dataset " << a.path << "\n"
              << "  version " << DatasetFile::kVersion << ", bits " << d.bits << ", max_faces " << d.max_faces << "\n"
              << "  records " << d.records.size() << "\n";
    const auto hist = face_count_histograms(d);
    for (std::size_t c = 0; c < d.class_names.size(); ++c) {
      std::size_t n = 0;
      for (auto v : hist[c]) n += v;
      std::cout << "  class " << c << " " << d.class_names[c] << ": " << n << " records\n";
      std::cout << "    face counts:\n";
      print_histogram(hist[c]);
    }
    return kExitOk;
  }
  if (magic == "PDCK") {
    const Checkpoint ck = parse_checkpoint(bytes);
    std::cout << "checkpoint " << a.path << "\n"
              << "  version " << Checkpoint::kVersion << ", step " << ck.step << ", epoch " << ck.epoch << "\n"
              << "  model " << to_json(ck.model).dump() << "\n"
              << "  schedule " << to_json(ck.schedule).dump() << "\n"
              << "  optimizer " << to_json(ck.optimizer).dump() << "\n"
              << "  optimizer state " << (ck.adam ? "present" : "absent") << "\n"
              << "  parameters " << ck.params.parameter_count() << "\n";
    ck.params.for_each([](const std::string& name, const Matrix& m, bool) {
      std::cout << "    " << name << " [" << m.rows() << ", " << m.cols() << "]\n";
    });
    for (std::size_t c = 0; c < ck.class_names.size(); ++c) {
      std::cout << "  class " << c << " " << ck.class_names[c] << " face counts:\n";
      print_histogram(ck.face_histograms[c]);
    }
    return kExitOk;
  }
  throw FormatError(0, "unknown magic, expected a dataset (PDDS) or checkpoint (PDCK)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshdiff: discrete diffusion for triangle meshes"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* cmd_pre = app.add_subcommand("preprocess", "build train/test datasets from a directory of OBJ files");
  add_common(cmd_pre, pre.common, true);
  cmd_pre->add_option("--input", pre.input, "input directory with one subdirectory per class")->required();

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "train the denoiser");
  add_common(cmd_train, tr.common, true);
  cmd_train->add_option("--data", tr.data, "training dataset file")->required()->check(CLI::ExistingFile);
  cmd_train->add_option("--resume", tr.resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  cmd_train->add_option("--epochs", tr.epochs, "epoch cap")->check(CLI::PositiveNumber);
  cmd_train->add_option("--batch-size", tr.batch_size, "examples per step")->check(CLI::PositiveNumber);
  cmd_train->add_option("--max-steps", tr.max_steps, "step cap (0 = none)")->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--lr", tr.lr, "base learning rate")->check(CLI::PositiveNumber);
  cmd_train->add_option("--timesteps", tr.timesteps, "diffusion steps T")->check(CLI::PositiveNumber);

  SampleArgs sa;
  auto* cmd_sample = app.add_subcommand("sample", "generate meshes from a checkpoint");
  add_common(cmd_sample, sa.common, true);
  cmd_sample->add_option("--checkpoint", sa.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  cmd_sample->add_option("--class", sa.class_name, "class name or index");
  cmd_sample->add_option("--count", sa.count, "number of samples")->check(CLI::PositiveNumber);
  cmd_sample->add_option("--steps", sa.steps, "reverse steps (subsampled when below T)")->check(CLI::PositiveNumber);
  cmd_sample->add_option("--faces", sa.faces, "fixed face count")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "compare generated meshes with reference meshes");
  add_common(cmd_eval, ev.common, false);
  cmd_eval->add_option("--gen", ev.gen, "directory of generated OBJ files")->required();
  cmd_eval->add_option("--ref", ev.ref, "directory of reference OBJ files")->required();
  cmd_eval->add_option("--points", ev.points, "surface points per mesh")->check(CLI::PositiveNumber);
  cmd_eval->add_option("--grid", ev.grid, "JSD grid resolution")->check(CLI::PositiveNumber);

  InspectArgs in;
  auto* cmd_inspect = app.add_subcommand("inspect", "print a dataset or checkpoint summary");
  cmd_inspect->add_option("path", in.path, "dataset or checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_pre->parsed()) return run_preprocess(pre);
    if (cmd_train->parsed()) return run_train(tr);
    if (cmd_sample->parsed()) return run_sample(sa);
    if (cmd_eval->parsed()) return run_eval(ev);
    if (cmd_inspect->parsed()) return run_inspect(in);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) std::cerr << sub->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
