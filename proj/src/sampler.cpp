#include "meshdiff/sampler.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "meshdiff/error.hpp"
#include "meshdiff/obj_io.hpp"
#include "meshdiff/parallel.hpp"
#include "meshdiff/random.hpp"

namespace meshdiff {

void SampleRequest::validate(const Checkpoint& ckpt) const {
  if (count < 1) throw ArgumentError("count must be at least 1");
  if (steps < 0 || steps > ckpt.schedule.steps)
    throw ArgumentError("steps must be in [1, " + std::to_string(ckpt.schedule.steps) + "]");
  if (class_label < 0 || class_label >= ckpt.model.class_count) throw ArgumentError("class label out of range");
  if (face_count < 0 || face_count > ckpt.model.max_faces) throw ArgumentError("face count outside [1, max_faces]");
  if (threads < 1) throw ArgumentError("threads must be positive");
}

std::vector<int> timestep_sequence(int total_steps, int k) {
  if (total_steps < 1 || k < 1 || k > total_steps) throw ArgumentError("step count outside [1, T]");
  if (k == 1) return {1};
  std::vector<int> seq(static_cast<std::size_t>(k));
  const long span = total_steps - 1;
  for (int i = 0; i < k; ++i)
    seq[static_cast<std::size_t>(i)] = total_steps - static_cast<int>((i * span * 2 + (k - 1)) / (2L * (k - 1)));
  return seq;
}

int draw_face_count(const Checkpoint& ckpt, int class_label, std::uint64_t seed) {
  const auto& hist = ckpt.face_histograms.at(static_cast<std::size_t>(class_label));
  std::uint64_t total = 0;
  for (std::uint32_t h : hist) total += h;
  if (total == 0) throw ArgumentError("class " + std::to_string(class_label) + " has no training records");
  std::uint64_t pick = Rng(seed, {0x46414345u}).below(total);
  for (std::size_t m = 0; m < hist.size(); ++m) {
    if (pick < hist[m]) return static_cast<int>(m);
    pick -= hist[m];
  }
  throw Error("face histogram draw fell through");
}

QuantizedTriangleSoup sample_soup(const Checkpoint& ckpt, const SampleRequest& request) {
  const Denoiser model(ckpt.model, ckpt.params);
  return sample_soup(model, ckpt, ckpt.schedule.build(), request);
}

QuantizedTriangleSoup sample_soup(const Denoiser& model, const Checkpoint& ckpt, const NoiseSchedule& schedule,
                                  const SampleRequest& request) {
  request.validate(ckpt);
  if (model.config() != ckpt.model || schedule.steps != ckpt.schedule.steps)
    throw ArgumentError("model or schedule does not match the checkpoint");
  const int m = request.face_count > 0 ? request.face_count : draw_face_count(ckpt, request.class_label, request.seed);
  if (m < 1) throw ArgumentError("sampled face count is zero");
  const int categories = ckpt.model.categories;

  QuantizedTriangleSoup x = QuantizedTriangleSoup::empty(ckpt.bits(), ckpt.model.max_faces, request.class_label);
  const std::uint64_t init_key = derive_key(request.seed, {0x494E4954u});
  for (int j = 0; j < m; ++j) {
    x.mask[static_cast<std::size_t>(j)] = 1;
    for (std::size_t s = 0; s < 9; ++s)
      x.faces[static_cast<std::size_t>(j)][s] =
          static_cast<std::uint16_t>(counter_bits(init_key, static_cast<std::uint64_t>(j) * 9 + s) %
                                     static_cast<std::uint64_t>(categories));
  }

  const std::vector<int> seq = timestep_sequence(schedule.steps, request.steps > 0 ? request.steps : schedule.steps);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int t = seq[i];
    const LogitTensor logits = model.forward(x, t, request.class_label, schedule);
    const bool last = i + 1 == seq.size();
    const int s_next = last ? 0 : seq[i + 1];
    const double keep = schedule.alpha_bar(t) / schedule.alpha_bar(s_next);
    const double ab_prev = schedule.alpha_bar(s_next);
    const std::uint64_t key = derive_key(request.seed, {0x53544550u, static_cast<std::uint64_t>(t)});
    for (int j = 0; j < m; ++j) {
      for (int c = 0; c < 9; ++c) {
        const auto row = logits.slot(j, c);
        auto& code = x.faces[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
        if (last) {
          code = static_cast<std::uint16_t>(std::max_element(row.begin(), row.end()) - row.begin());
          continue;
        }
        const CategoricalDistribution p = reverse_step_closed_form(code, row, keep, ab_prev);
        const double u = to_unit(counter_bits(key, static_cast<std::uint64_t>(j) * 9 + static_cast<std::uint64_t>(c)));
        double acc = 0;
        int pick = categories - 1;
        for (int k = 0; k < categories; ++k) {
          acc += p.probs[static_cast<std::size_t>(k)];
          if (u < acc) {
            pick = k;
            break;
          }
        }
        code = static_cast<std::uint16_t>(pick);
      }
    }
  }
  return x;
}

std::uint64_t item_seed(std::uint64_t seed, std::size_t index) { return derive_key(seed, {0x4954454Du, index}); }

std::vector<SampleOutcome> generate_batch(const Checkpoint& ckpt, const SampleRequest& request,
                                          const std::filesystem::path& out_dir) {
  request.validate(ckpt);
  std::filesystem::create_directories(out_dir);
  const Denoiser model(ckpt.model, ckpt.params);
  const NoiseSchedule schedule = ckpt.schedule.build();

  std::vector<SampleOutcome> out(static_cast<std::size_t>(request.count));
  parallel_for(out.size(), request.threads, [&](std::size_t i) {
    SampleOutcome& o = out[i];
    o.index = i;
    o.seed = item_seed(request.seed, i);
    o.class_label = request.class_label;
    SampleRequest one = request;
    one.count = 1;
    one.seed = o.seed;
    try {
      o.soup = sample_soup(model, ckpt, schedule, one);
      o.faces = o.soup.face_count();
      const Mesh mesh = soup_to_mesh(o.soup);
      char name[32];
      std::snprintf(name, sizeof name, "sample_%04zu.obj", i);
      write_obj_file(out_dir / name, mesh);
      o.path = name;
      o.status = "ok";
    } catch (const std::exception& e) {
      o.status = std::string("failed: ") + e.what();
    }
  });

  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw Error("cannot write manifest in " + out_dir.string());
  for (const SampleOutcome& o : out) {
    nlohmann::json row = {{"index", o.index},
                          {"seed", o.seed},
                          {"class", o.class_label},
                          {"faces", o.faces},
                          {"path", o.path.empty() ? nlohmann::json(nullptr) : nlohmann::json(o.path)},
                          {"status", o.status}};
    manifest << row.dump() << '\n';
  }
  if (!manifest) throw Error("failed writing manifest in " + out_dir.string());
  return out;
}

}  // namespace meshdiff
