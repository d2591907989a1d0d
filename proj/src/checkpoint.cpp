#include "meshdiff/checkpoint.hpp"

#include <bit>
#include <map>

#include "meshdiff/binary_io.hpp"
#include "meshdiff/error.hpp"

namespace meshdiff {

using nlohmann::json;

int Checkpoint::bits() const { return std::countr_zero(static_cast<unsigned>(model.categories)); }

std::vector<std::vector<std::uint32_t>> face_count_histograms(const DatasetFile& data) {
  std::vector<std::vector<std::uint32_t>> h(data.class_names.size(),
                                            std::vector<std::uint32_t>(static_cast<std::size_t>(data.max_faces) + 1, 0));
  for (const auto& r : data.records) ++h.at(static_cast<std::size_t>(r.class_id)).at(r.faces.size());
  return h;
}

json to_json(const DenoiserConfig& c) {
  return {{"embed_dim", c.embed_dim},   {"face_dim", c.face_dim},   {"depth", c.depth},
          {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio}, {"max_faces", c.max_faces},
          {"categories", c.categories}, {"class_count", c.class_count}, {"skip_connections", c.skip_connections}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
  DenoiserConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.face_dim = j.value("face_dim", c.face_dim);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.max_faces = j.value("max_faces", c.max_faces);
  c.categories = j.value("categories", c.categories);
  c.class_count = j.value("class_count", c.class_count);
  c.skip_connections = j.value("skip_connections", c.skip_connections);
  return c;
}

json to_json(const ScheduleConfig& c) {
  return {{"timesteps", c.steps}, {"offset", c.offset}, {"beta_clip", c.beta_clip}};
}

ScheduleConfig schedule_config_from_json(const json& j) {
  ScheduleConfig c;
  c.steps = j.value("timesteps", c.steps);
  c.offset = j.value("offset", c.offset);
  c.beta_clip = j.value("beta_clip", c.beta_clip);
  return c;
}

json to_json(const OptimizerConfig& c) {
  return {{"base_lr", c.base_lr},           {"weight_decay", c.weight_decay}, {"beta1", c.beta1},
          {"beta2", c.beta2},               {"eps", c.eps},                   {"warmup_steps", c.warmup_steps},
          {"total_steps", c.total_steps}};
}

OptimizerConfig optimizer_config_from_json(const json& j) {
  OptimizerConfig c;
  c.base_lr = j.value("base_lr", c.base_lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.total_steps = j.value("total_steps", c.total_steps);
  return c;
}

namespace {

constexpr std::uint8_t kF32 = 0;
constexpr std::uint8_t kF64 = 1;

void put_tensor(ByteWriter& w, const std::string& name, const Matrix& m) {
  w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
  w.put_raw(name);
  w.put<std::uint8_t>(kF64);
  w.put<std::uint8_t>(2);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double)});
}

struct RawTensor {
  std::size_t offset;
  Matrix value;
};

RawTensor get_tensor(ByteReader& r, std::string& name) {
  const std::size_t at = r.offset();
  name = r.get_string(r.get<std::uint16_t>("tensor name length"), "tensor name");
  const auto dtype = r.get<std::uint8_t>("tensor dtype");
  if (dtype != kF32 && dtype != kF64) throw FormatError(at, "unknown dtype for tensor " + name);
  const auto rank = r.get<std::uint8_t>("tensor rank");
  if (rank > 2) throw FormatError(at, "tensor " + name + " has rank above 2");
  std::uint64_t dims[2] = {1, 1};
  for (int i = 0; i < rank; ++i) dims[2 - rank + i] = r.get<std::uint64_t>("tensor dims");
  if (dims[0] > (1u << 30) || dims[1] > (1u << 30)) throw FormatError(at, "tensor " + name + " is implausibly large");
  Matrix m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  const std::size_t n = static_cast<std::size_t>(m.size());
  if (dtype == kF64) {
    const auto raw = r.get_bytes(n * sizeof(double), "tensor data");
    std::memcpy(m.data(), raw.data(), raw.size());
  } else {
    const auto raw = r.get_bytes(n * sizeof(float), "tensor data");
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, raw.data() + i * sizeof(float), sizeof(float));
      m.data()[i] = f;
    }
  }
  return {at, std::move(m)};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  json header = {{"model", to_json(c.model)},
                 {"schedule", to_json(c.schedule)},
                 {"optimizer", to_json(c.optimizer)},
                 {"step", c.step},
                 {"epoch", c.epoch},
                 {"bits", c.bits()},
                 {"class_names", c.class_names},
                 {"face_histograms", c.face_histograms},
                 {"training", c.training.is_null() ? json::object() : c.training},
                 {"has_optimizer_state", c.adam.has_value()}};
  const std::string text = header.dump();
  ByteWriter w;
  w.put_raw("PDCK");
  w.put<std::uint16_t>(Checkpoint::kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_raw(text);
  c.params.for_each([&](const std::string& name, const Matrix& m, bool) { put_tensor(w, name, m); });
  if (c.adam) {
    c.adam->m.for_each([&](const std::string& name, const Matrix& m, bool) { put_tensor(w, "adam.m." + name, m); });
    c.adam->v.for_each([&](const std::string& name, const Matrix& m, bool) { put_tensor(w, "adam.v." + name, m); });
  }
  return std::move(w).bytes();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.get_string(4, "magic") != "PDCK") throw FormatError(0, "bad magic, not a checkpoint");
  const std::size_t version_at = r.offset();
  if (r.get<std::uint16_t>("version") != Checkpoint::kVersion) throw FormatError(version_at, "unsupported version");
  const std::uint32_t length = r.get<std::uint32_t>("header length");
  const std::size_t header_at = r.offset();
  const std::string text = r.get_string(length, "header");
  json header;
  Checkpoint c;
  try {
    header = json::parse(text);
    c.model = denoiser_config_from_json(header.at("model"));
    c.schedule = schedule_config_from_json(header.at("schedule"));
    c.optimizer = optimizer_config_from_json(header.at("optimizer"));
    c.step = header.at("step").get<long>();
    c.epoch = header.value("epoch", 0L);
    c.class_names = header.at("class_names").get<std::vector<std::string>>();
    c.face_histograms = header.at("face_histograms").get<std::vector<std::vector<std::uint32_t>>>();
    c.training = header.value("training", json::object());
  } catch (const json::exception& e) {
    throw FormatError(header_at, std::string("bad checkpoint header: ") + e.what());
  }
  try {
    c.model.validate();
  } catch (const Error& e) {
    throw FormatError(header_at, std::string("bad model config: ") + e.what());
  }
  const bool has_adam = header.value("has_optimizer_state", false);

  std::map<std::string, RawTensor> tensors;
  while (!r.at_end()) {
    std::string name;
    RawTensor t = get_tensor(r, name);
    const std::size_t at = t.offset;
    if (!tensors.emplace(name, std::move(t)).second) throw FormatError(at, "duplicate tensor " + name);
  }
  auto fill = [&](DenoiserParams& target, const std::string& prefix) {
    target.for_each([&](const std::string& name, Matrix& m, bool) {
      const auto it = tensors.find(prefix + name);
      if (it == tensors.end()) throw FormatError(bytes.size(), "missing tensor " + prefix + name);
      if (it->second.value.rows() != m.rows() || it->second.value.cols() != m.cols())
        throw FormatError(it->second.offset, "tensor " + prefix + name + " has the wrong shape");
      m = std::move(it->second.value);
      tensors.erase(it);
    });
  };
  c.params = DenoiserParams::zeros(c.model);
  fill(c.params, "");
  if (has_adam) {
    c.adam = AdamState::zeros(c.model);
    fill(c.adam->m, "adam.m.");
    fill(c.adam->v, "adam.v.");
  }
  if (!tensors.empty()) throw FormatError(tensors.begin()->second.offset, "unexpected tensor " + tensors.begin()->first);
  if (c.face_histograms.size() != static_cast<std::size_t>(c.model.class_count))
    throw FormatError(header_at, "face histogram count does not match class_count");
  return c;
}

void write_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp.string(), serialize_checkpoint(ckpt));
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
  return parse_checkpoint(read_file_bytes(path.string()));
}

}  // namespace meshdiff
