#include "meshdiff/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "meshdiff/error.hpp"
#include "meshdiff/parallel.hpp"
#include "meshdiff/random.hpp"

namespace meshdiff {

namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix zeros(Eigen::Index rows, Eigen::Index cols) { return Matrix::Zero(rows, cols); }
Matrix ones(Eigen::Index rows, Eigen::Index cols) { return Matrix::Ones(rows, cols); }

// ---- layers ---------------------------------------------------------------

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y(x.rows(), w.cols());
  y.noalias() = x * w;
  y.rowwise() += b.row(0);
  return y;
}

// Accumulates dW, db and returns dx.
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db) {
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  Matrix dx(dy.rows(), w.rows());
  dx.noalias() = dy * w.transpose();
  return dx;
}

struct LayerNormTrace {
  Matrix xhat;
  Eigen::VectorXd rstd;
};

Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, LayerNormTrace* trace) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd rstd(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  Matrix y = (xhat.array().rowwise() * g.row(0).array()).matrix();
  y.rowwise() += b.row(0);
  if (trace) *trace = {std::move(xhat), std::move(rstd)};
  return y;
}

Matrix layer_norm_backward(const LayerNormTrace& t, const Matrix& g, const Matrix& dy, Matrix& dg, Matrix& db) {
  dg += (dy.array() * t.xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  const Matrix dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = (dxhat.row(r).array() * t.xhat.row(r).array()).mean();
    dx.row(r) = t.rstd(r) * (dxhat.row(r).array() - mean_d - t.xhat.row(r).array() * mean_dx);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }
double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double silu(double x) { return x * sigmoid(x); }
double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double peak = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - peak).exp();
    s.row(r) /= s.row(r).sum();
  }
}

struct BlockTrace {
  Matrix merged;  // [x, skip] when the block receives a long skip
  Matrix x_in;
  LayerNormTrace ln1;
  Matrix u1, qkv;
  std::vector<Matrix> attn;  // per head, n x n
  Matrix o, x2;
  LayerNormTrace ln2;
  Matrix u2, h, g;
};

bool receives_skip(const DenoiserConfig& c, int block) { return c.skip_connections && block >= c.depth / 2; }
bool emits_skip(const DenoiserConfig& c, int block) { return c.skip_connections && block < c.depth / 2; }

}  // namespace

// ---- configuration & parameters ------------------------------------------

void DenoiserConfig::validate() const {
  if (embed_dim < 1 || face_dim < 2 || depth < 1 || heads < 1 || mlp_ratio < 1)
    throw ArgumentError("denoiser dimensions must be positive");
  if (face_dim % heads != 0) throw ArgumentError("face_dim must be divisible by heads");
  if (face_dim % 2 != 0) throw ArgumentError("face_dim must be even");
  if (skip_connections && depth % 2 != 0) throw ArgumentError("depth must be even with skip connections");
  if (max_faces < 1) throw ArgumentError("max_faces must be positive");
  if (categories < 2) throw ArgumentError("need at least two categories");
  if (class_count < 1) throw ArgumentError("class_count must be positive");
}

DenoiserParams DenoiserParams::zeros(const DenoiserConfig& c) {
  c.validate();
  const int d = c.embed_dim, f = c.face_dim, hidden = c.mlp_ratio * c.face_dim;
  DenoiserParams p;
  p.coord_embed = meshdiff::zeros(c.categories, d);
  p.slot_pos = meshdiff::zeros(9, d);
  p.face_proj_w = meshdiff::zeros(9 * d, f);
  p.face_proj_b = meshdiff::zeros(1, f);
  p.face_pos = meshdiff::zeros(c.max_faces, f);
  p.time_w1 = meshdiff::zeros(f, f);
  p.time_b1 = meshdiff::zeros(1, f);
  p.time_w2 = meshdiff::zeros(f, f);
  p.time_b2 = meshdiff::zeros(1, f);
  p.class_embed = meshdiff::zeros(c.class_count, f);
  p.blocks.resize(static_cast<std::size_t>(c.depth));
  for (int i = 0; i < c.depth; ++i) {
    BlockParams& b = p.blocks[static_cast<std::size_t>(i)];
    if (receives_skip(c, i)) {
      b.skip_w = meshdiff::zeros(2 * f, f);
      b.skip_b = meshdiff::zeros(1, f);
    }
    b.ln1_g = meshdiff::zeros(1, f);
    b.ln1_b = meshdiff::zeros(1, f);
    b.qkv_w = meshdiff::zeros(f, 3 * f);
    b.qkv_b = meshdiff::zeros(1, 3 * f);
    b.proj_w = meshdiff::zeros(f, f);
    b.proj_b = meshdiff::zeros(1, f);
    b.ln2_g = meshdiff::zeros(1, f);
    b.ln2_b = meshdiff::zeros(1, f);
    b.fc1_w = meshdiff::zeros(f, hidden);
    b.fc1_b = meshdiff::zeros(1, hidden);
    b.fc2_w = meshdiff::zeros(hidden, f);
    b.fc2_b = meshdiff::zeros(1, f);
  }
  p.final_ln_g = meshdiff::zeros(1, f);
  p.final_ln_b = meshdiff::zeros(1, f);
  p.head_w = meshdiff::zeros(f, 9 * c.categories);
  p.head_b = meshdiff::zeros(1, 9 * c.categories);
  return p;
}

DenoiserParams DenoiserParams::initialize(const DenoiserConfig& c, std::uint64_t seed) {
  DenoiserParams p = zeros(c);
  std::uint64_t tensor = 0;
  p.for_each([&](const std::string& name, Matrix& m, bool is_vector) {
    Rng rng(seed, {0x494E4954u, tensor++});
    if (is_vector) {
      const bool gain = name.ends_with("ln1.weight") || name.ends_with("ln2.weight") || name == "final_ln.weight";
      if (gain) m = ones(m.rows(), m.cols());
      return;
    }
    std::normal_distribution<double> normal(0.0, 0.02);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  });
  return p;
}

std::size_t DenoiserParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m, bool) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

void DenoiserParams::set_zero() {
  for_each([](const std::string&, Matrix& m, bool) { m.setZero(); });
}

void DenoiserParams::add(const DenoiserParams& other) {
  std::vector<const Matrix*> rhs;
  other.for_each([&](const std::string&, const Matrix& m, bool) { rhs.push_back(&m); });
  std::size_t i = 0;
  for_each([&](const std::string&, Matrix& m, bool) { m += *rhs.at(i++); });
}

void DenoiserParams::scale(double s) {
  for_each([&](const std::string&, Matrix& m, bool) { m *= s; });
}

bool DenoiserParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Matrix& m, bool) { ok = ok && m.allFinite(); });
  return ok;
}

Eigen::RowVectorXd timestep_features(int t, int dim) {
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    f(i) = std::sin(t * freq);
    f(half + i) = std::cos(t * freq);
  }
  return f;
}

// ---- model ------------------------------------------------------------------

struct Denoiser::Trace {
  std::vector<int> slots;
  std::vector<FaceCodes> codes;
  int class_label = 0;
  Matrix x0;  // n x 9D
  Matrix tfeat, h1, a1;
  std::vector<BlockTrace> blocks;
  LayerNormTrace lnf;
  Matrix yf;
};

Denoiser::Denoiser(DenoiserConfig config, DenoiserParams params) : config_(config), params_(std::move(params)) {
  config_.validate();
  const DenoiserParams shape = DenoiserParams::zeros(config_);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> want;
  shape.for_each([&](const std::string&, const Matrix& m, bool) { want.emplace_back(m.rows(), m.cols()); });
  std::size_t i = 0;
  params_.for_each([&](const std::string& name, const Matrix& m, bool) {
    if (i >= want.size() || want[i] != std::pair{m.rows(), m.cols()})
      throw ArgumentError("parameter " + name + " does not match the configuration");
    ++i;
  });
  if (i != want.size()) throw ArgumentError("parameter set does not match the configuration");
}

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t seed)
    : Denoiser(config, DenoiserParams::initialize(config, seed)) {}

void Denoiser::check_input(const QuantizedTriangleSoup& soup, int t, int class_label,
                           const NoiseSchedule& schedule) const {
  if (soup.max_faces() != config_.max_faces) throw ArgumentError("soup capacity does not match max_faces");
  if (soup.categories() != config_.categories) throw ArgumentError("soup bit depth does not match the model");
  if (soup.mask.size() != soup.faces.size()) throw ArgumentError("face and mask lengths differ");
  for (std::size_t j = 0; j < soup.faces.size(); ++j)
    if (soup.mask[j])
      for (std::uint16_t v : soup.faces[j])
        if (v >= config_.categories) throw ArgumentError("category out of range");
  if (t < 1 || t > schedule.steps) throw ArgumentError("timestep out of range");
  if (class_label < 0 || class_label >= config_.class_count) throw ArgumentError("class label out of range");
  if (soup.face_count() == 0) throw ArgumentError("soup has no faces");
}

Matrix Denoiser::run(const QuantizedTriangleSoup& noised, int t, int class_label, Trace* trace) const {
  const DenoiserConfig& c = config_;
  const DenoiserParams& p = params_;
  const int d = c.embed_dim, f = c.face_dim;

  std::vector<int> slots;
  for (int j = 0; j < noised.max_faces(); ++j)
    if (noised.mask[static_cast<std::size_t>(j)]) slots.push_back(j);
  const auto n = static_cast<Eigen::Index>(slots.size());

  // Coordinate embeddings + intra-face positions, concatenated per face.
  Matrix x0(n, 9 * d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const FaceCodes& codes = noised.faces[static_cast<std::size_t>(slots[static_cast<std::size_t>(r)])];
    for (int s = 0; s < 9; ++s) x0.block(r, s * d, 1, d) = p.coord_embed.row(codes[static_cast<std::size_t>(s)]) + p.slot_pos.row(s);
  }

  // Conditioning: timestep MLP + class embedding, added to every token.
  Matrix tfeat = timestep_features(t, f);
  Matrix h1 = linear(tfeat, p.time_w1, p.time_b1);
  Matrix a1 = h1.unaryExpr([](double v) { return silu(v); });
  Matrix cond = linear(a1, p.time_w2, p.time_b2) + p.class_embed.row(class_label);

  Matrix x = linear(x0, p.face_proj_w, p.face_proj_b);
  for (Eigen::Index r = 0; r < n; ++r) x.row(r) += p.face_pos.row(slots[static_cast<std::size_t>(r)]) + cond.row(0);

  const int dh = f / c.heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> skips;
  std::vector<BlockTrace> btraces(static_cast<std::size_t>(c.depth));
  for (int i = 0; i < c.depth; ++i) {
    const BlockParams& b = p.blocks[static_cast<std::size_t>(i)];
    BlockTrace& bt = btraces[static_cast<std::size_t>(i)];
    if (receives_skip(c, i)) {
      Matrix merged(n, 2 * f);
      merged << x, skips[static_cast<std::size_t>(c.depth - 1 - i)];
      x = linear(merged, b.skip_w, b.skip_b);
      if (trace) bt.merged = std::move(merged);
    }
    Matrix u1 = layer_norm(x, b.ln1_g, b.ln1_b, &bt.ln1);
    Matrix qkv = linear(u1, b.qkv_w, b.qkv_b);
    Matrix o(n, f);
    bt.attn.resize(static_cast<std::size_t>(c.heads));
    for (int h = 0; h < c.heads; ++h) {
      const auto q = qkv.middleCols(h * dh, dh);
      const auto k = qkv.middleCols(f + h * dh, dh);
      const auto v = qkv.middleCols(2 * f + h * dh, dh);
      Matrix scores(n, n);
      scores.noalias() = (q * k.transpose()) * attn_scale;
      softmax_rows(scores);
      o.middleCols(h * dh, dh).noalias() = scores * v;
      bt.attn[static_cast<std::size_t>(h)] = std::move(scores);
    }
    Matrix x2 = x + linear(o, b.proj_w, b.proj_b);
    Matrix u2 = layer_norm(x2, b.ln2_g, b.ln2_b, &bt.ln2);
    Matrix hpre = linear(u2, b.fc1_w, b.fc1_b);
    Matrix g = hpre.unaryExpr([](double v) { return gelu(v); });
    Matrix x3 = x2 + linear(g, b.fc2_w, b.fc2_b);
    if (trace) {
      bt.x_in = std::move(x);
      bt.u1 = std::move(u1);
      bt.qkv = std::move(qkv);
      bt.o = std::move(o);
      bt.x2 = std::move(x2);
      bt.u2 = std::move(u2);
      bt.h = std::move(hpre);
      bt.g = std::move(g);
    }
    x = std::move(x3);
    if (emits_skip(c, i)) skips.push_back(x);
  }

  LayerNormTrace lnf;
  Matrix yf = layer_norm(x, p.final_ln_g, p.final_ln_b, &lnf);
  Matrix logits = linear(yf, p.head_w, p.head_b);

  if (trace) {
    trace->slots = std::move(slots);
    trace->codes.clear();
    for (int j : trace->slots) trace->codes.push_back(noised.faces[static_cast<std::size_t>(j)]);
    trace->class_label = class_label;
    trace->x0 = std::move(x0);
    trace->tfeat = std::move(tfeat);
    trace->h1 = std::move(h1);
    trace->a1 = std::move(a1);
    trace->blocks = std::move(btraces);
    trace->lnf = std::move(lnf);
    trace->yf = std::move(yf);
  }
  return logits;
}

void Denoiser::backprop(const Trace& tr, const Matrix& dlogits, DenoiserParams& gr) const {
  const DenoiserConfig& c = config_;
  const DenoiserParams& p = params_;
  const int d = c.embed_dim, f = c.face_dim;
  const auto n = static_cast<Eigen::Index>(tr.slots.size());
  const int dh = f / c.heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dyf = linear_backward(tr.yf, p.head_w, dlogits, gr.head_w, gr.head_b);
  Matrix dx = layer_norm_backward(tr.lnf, p.final_ln_g, dyf, gr.final_ln_g, gr.final_ln_b);

  std::vector<Matrix> dskips(static_cast<std::size_t>(c.depth / 2), Matrix::Zero(n, f));
  for (int i = c.depth - 1; i >= 0; --i) {
    const BlockParams& b = p.blocks[static_cast<std::size_t>(i)];
    BlockParams& gb = gr.blocks[static_cast<std::size_t>(i)];
    const BlockTrace& bt = tr.blocks[static_cast<std::size_t>(i)];
    if (emits_skip(c, i)) dx += dskips[static_cast<std::size_t>(i)];

    // MLP branch.
    Matrix dg = linear_backward(bt.g, b.fc2_w, dx, gb.fc2_w, gb.fc2_b);
    Matrix dh_pre = dg.cwiseProduct(bt.h.unaryExpr([](double v) { return gelu_grad(v); }));
    Matrix du2 = linear_backward(bt.u2, b.fc1_w, dh_pre, gb.fc1_w, gb.fc1_b);
    Matrix dx2 = dx + layer_norm_backward(bt.ln2, b.ln2_g, du2, gb.ln2_g, gb.ln2_b);

    // Attention branch.
    Matrix do_ = linear_backward(bt.o, b.proj_w, dx2, gb.proj_w, gb.proj_b);
    Matrix dqkv = Matrix::Zero(n, 3 * f);
    for (int h = 0; h < c.heads; ++h) {
      const Matrix& a = bt.attn[static_cast<std::size_t>(h)];
      const auto q = bt.qkv.middleCols(h * dh, dh);
      const auto k = bt.qkv.middleCols(f + h * dh, dh);
      const auto v = bt.qkv.middleCols(2 * f + h * dh, dh);
      const auto doh = do_.middleCols(h * dh, dh);
      Matrix da(n, n);
      da.noalias() = doh * v.transpose();
      dqkv.middleCols(2 * f + h * dh, dh).noalias() = a.transpose() * doh;
      const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
      Matrix ds = (a.array() * (da.array().colwise() - row_dot.array())).matrix() * attn_scale;
      dqkv.middleCols(h * dh, dh).noalias() = ds * k;
      dqkv.middleCols(f + h * dh, dh).noalias() = ds.transpose() * q;
    }
    Matrix du1 = linear_backward(bt.u1, b.qkv_w, dqkv, gb.qkv_w, gb.qkv_b);
    dx = dx2 + layer_norm_backward(bt.ln1, b.ln1_g, du1, gb.ln1_g, gb.ln1_b);

    if (receives_skip(c, i)) {
      Matrix dmerged = linear_backward(bt.merged, b.skip_w, dx, gb.skip_w, gb.skip_b);
      dx = dmerged.leftCols(f);
      dskips[static_cast<std::size_t>(c.depth - 1 - i)] += dmerged.rightCols(f);
    }
  }

  // Token construction.
  Matrix dx0 = linear_backward(tr.x0, p.face_proj_w, dx, gr.face_proj_w, gr.face_proj_b);
  for (Eigen::Index r = 0; r < n; ++r) gr.face_pos.row(tr.slots[static_cast<std::size_t>(r)]) += dx.row(r);
  const Matrix dcond = dx.colwise().sum();
  gr.class_embed.row(tr.class_label) += dcond.row(0);
  Matrix da1 = linear_backward(tr.a1, p.time_w2, dcond, gr.time_w2, gr.time_b2);
  Matrix dh1 = da1.cwiseProduct(tr.h1.unaryExpr([](double v) { return silu_grad(v); }));
  linear_backward(tr.tfeat, p.time_w1, dh1, gr.time_w1, gr.time_b1);

  for (Eigen::Index r = 0; r < n; ++r) {
    const FaceCodes& codes = tr.codes[static_cast<std::size_t>(r)];
    for (int s = 0; s < 9; ++s) {
      const auto g = dx0.block(r, s * d, 1, d);
      gr.coord_embed.row(codes[static_cast<std::size_t>(s)]) += g;
      gr.slot_pos.row(s) += g;
    }
  }
}

LogitTensor Denoiser::forward(const QuantizedTriangleSoup& noised, int t, int class_label,
                              const NoiseSchedule& schedule) const {
  check_input(noised, t, class_label, schedule);
  const Matrix logits = run(noised, t, class_label, nullptr);
  LogitTensor out(config_.max_faces, config_.categories);
  Eigen::Index r = 0;
  const std::size_t width = 9 * static_cast<std::size_t>(config_.categories);
  for (int j = 0; j < config_.max_faces; ++j) {
    if (!noised.mask[static_cast<std::size_t>(j)]) continue;
    std::copy(logits.row(r).data(), logits.row(r).data() + width, out.values.data() + static_cast<std::size_t>(j) * width);
    ++r;
  }
  return out;
}

CrossEntropy Denoiser::accumulate_gradient(const QuantizedTriangleSoup& noised, const QuantizedTriangleSoup& target,
                                           int t, const NoiseSchedule& schedule, double scale,
                                           DenoiserParams& grads) const {
  check_input(noised, t, target.class_label, schedule);
  if (noised.mask != target.mask) throw ArgumentError("noised and target masks differ");
  Trace trace;
  const Matrix logits = run(noised, t, target.class_label, &trace);

  // Cross-entropy and its gradient on the compacted rows.
  const int cats = config_.categories;
  Matrix dlogits(logits.rows(), logits.cols());
  CrossEntropy ce;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const FaceCodes& y = target.faces[static_cast<std::size_t>(trace.slots[static_cast<std::size_t>(r)])];
    for (int s = 0; s < 9; ++s) {
      const auto row = logits.block(r, s * cats, 1, cats);
      const double peak = row.maxCoeff();
      const double log_z = peak + std::log((row.array() - peak).exp().sum());
      ce.total += log_z - row(0, y[static_cast<std::size_t>(s)]);
      ++ce.count;
      auto drow = dlogits.block(r, s * cats, 1, cats);
      drow = (row.array() - log_z).exp().matrix() * scale;
      drow(0, y[static_cast<std::size_t>(s)]) -= scale;
    }
  }
  ce.mean = ce.count ? ce.total / static_cast<double>(ce.count) : 0.0;
  backprop(trace, dlogits, grads);
  return ce;
}

// ---- batch gradient -----------------------------------------------------------

namespace {

struct ExampleDraw {
  int t;
  std::uint64_t noise_seed;
};

ExampleDraw draw_example(std::uint64_t seed, std::size_t index, int steps) {
  Rng rng(seed, {0x47524144u, index});
  const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(steps)));
  return {t, rng()};
}

}  // namespace

GradientResult gradient(const Denoiser& model, std::span<const QuantizedTriangleSoup> batch,
                        const NoiseSchedule& schedule, std::uint64_t seed, int threads) {
  if (batch.empty()) throw ArgumentError("gradient needs a non-empty batch");
  GradientResult result;
  result.grads = DenoiserParams::zeros(model.config());
  result.timesteps.resize(batch.size());
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  // Waves of per-example buffers, summed in example order.
  const std::size_t wave = static_cast<std::size_t>(std::max(threads, 1));
  std::vector<DenoiserParams> buffers(std::min(wave, batch.size()), DenoiserParams::zeros(model.config()));
  std::vector<double> losses(batch.size(), 0.0);
  for (std::size_t start = 0; start < batch.size(); start += wave) {
    const std::size_t count = std::min(wave, batch.size() - start);
    parallel_for(count, threads, [&](std::size_t k) {
      const std::size_t e = start + k;
      const QuantizedTriangleSoup& clean = batch[e];
      const ExampleDraw draw = draw_example(seed, e, schedule.steps);
      const QuantizedTriangleSoup noised = sample_xt(clean, draw.t, schedule, draw.noise_seed);
      const auto coords = static_cast<double>(9 * clean.face_count());
      buffers[k].set_zero();
      const CrossEntropy ce = model.accumulate_gradient(noised, clean, draw.t, schedule, inv_batch / coords, buffers[k]);
      losses[e] = ce.mean;
      result.timesteps[e] = draw.t;
    });
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t e = start + k;
      if (!std::isfinite(losses[e])) throw DivergenceError(e, "non-finite training loss");
      result.grads.add(buffers[k]);
    }
  }
  double total = 0;
  for (double l : losses) total += l;
  result.loss = total * inv_batch;
  if (!result.grads.all_finite()) throw DivergenceError(0, "non-finite gradient");
  return result;
}

double batch_loss(const Denoiser& model, std::span<const QuantizedTriangleSoup> batch, const NoiseSchedule& schedule,
                  std::uint64_t seed) {
  if (batch.empty()) throw ArgumentError("loss needs a non-empty batch");
  double total = 0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const ExampleDraw draw = draw_example(seed, e, schedule.steps);
    const QuantizedTriangleSoup noised = sample_xt(batch[e], draw.t, schedule, draw.noise_seed);
    const LogitTensor logits = model.forward(noised, draw.t, batch[e].class_label, schedule);
    total += cross_entropy_loss(logits, batch[e]).mean;
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace meshdiff
