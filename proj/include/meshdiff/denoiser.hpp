#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "meshdiff/diffusion.hpp"
#include "meshdiff/mesh.hpp"

namespace meshdiff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DenoiserConfig {
  int embed_dim = 16;   // per-coordinate embedding width
  int face_dim = 128;   // per-face token width
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int max_faces = kDefaultMaxFaces;
  int categories = 1 << kDefaultBits;
  int class_count = 1;
  bool skip_connections = true;

  void validate() const;
  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

struct BlockParams {
  Matrix skip_w, skip_b;  // empty unless this block receives a long skip
  Matrix ln1_g, ln1_b;
  Matrix qkv_w, qkv_b;
  Matrix proj_w, proj_b;
  Matrix ln2_g, ln2_b;
  Matrix fc1_w, fc1_b;
  Matrix fc2_w, fc2_b;
};

/// All trainable tensors. Linear layers map row vectors: y = x W + b.
/// Also used as the container for gradients and optimizer moments.
struct DenoiserParams {
  Matrix coord_embed;   // C x D
  Matrix slot_pos;      // 9 x D
  Matrix face_proj_w;   // 9D x Cf
  Matrix face_proj_b;   // 1 x Cf
  Matrix face_pos;      // max_faces x Cf
  Matrix time_w1, time_b1, time_w2, time_b2;
  Matrix class_embed;   // class_count x Cf
  std::vector<BlockParams> blocks;
  Matrix final_ln_g, final_ln_b;
  Matrix head_w;        // Cf x 9C
  Matrix head_b;

  /// Correctly shaped, all zero.
  static DenoiserParams zeros(const DenoiserConfig& config);
  /// Normal(0, 0.02) weights and embeddings, zero biases, unit norm gains.
  static DenoiserParams initialize(const DenoiserConfig& config, std::uint64_t seed);

  /// Visits every tensor in a fixed order as fn(name, matrix, is_vector).
  template <class Fn>
  void for_each(Fn&& fn);
  template <class Fn>
  void for_each(Fn&& fn) const;

  std::size_t parameter_count() const;
  /// Sets every entry to zero, keeping shapes.
  void set_zero();
  /// this += other, tensor by tensor.
  void add(const DenoiserParams& other);
  void scale(double s);
  bool all_finite() const;
};

/// Sinusoidal timestep features of width `dim` (sin half, then cos half).
Eigen::RowVectorXd timestep_features(int t, int dim);

class Denoiser {
 public:
  Denoiser(DenoiserConfig config, DenoiserParams params);
  Denoiser(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  const DenoiserParams& params() const { return params_; }
  DenoiserParams& params() { return params_; }

  /// Logits for every slot (max_faces x 9 x C). Only unmasked faces enter the
  /// transformer; padded slots receive zero logits.
  LogitTensor forward(const QuantizedTriangleSoup& noised, int t, int class_label,
                      const NoiseSchedule& schedule) const;

  /// Forward, cross-entropy against `target` (scaled by `scale`), and
  /// accumulation of the analytic gradient into `grads`. Returns the loss.
  CrossEntropy accumulate_gradient(const QuantizedTriangleSoup& noised, const QuantizedTriangleSoup& target, int t,
                                   const NoiseSchedule& schedule, double scale, DenoiserParams& grads) const;

 private:
  struct Trace;
  void check_input(const QuantizedTriangleSoup& soup, int t, int class_label, const NoiseSchedule& schedule) const;
  Matrix run(const QuantizedTriangleSoup& noised, int t, int class_label, Trace* trace) const;
  void backprop(const Trace& trace, const Matrix& dlogits, DenoiserParams& grads) const;

  DenoiserConfig config_;
  DenoiserParams params_;
};

struct GradientResult {
  double loss = 0;  // mean over examples of per-coordinate cross-entropy
  DenoiserParams grads;
  std::vector<int> timesteps;
};

/// Per example: draw t uniformly from [1, T], noise with sample_xt, forward,
/// and accumulate cross-entropy normalized by the unmasked-coordinate count;
/// the batch loss is the mean over examples. Per-example gradients are summed
/// in example order, so the result does not depend on `threads`.
GradientResult gradient(const Denoiser& model, std::span<const QuantizedTriangleSoup> batch,
                        const NoiseSchedule& schedule, std::uint64_t seed, int threads = 1);

/// The loss computed by gradient() without any backward pass.
double batch_loss(const Denoiser& model, std::span<const QuantizedTriangleSoup> batch, const NoiseSchedule& schedule,
                  std::uint64_t seed);

// ---------------------------------------------------------------------------

template <class Fn>
void DenoiserParams::for_each(Fn&& fn) {
  fn(std::string("coord_embed"), coord_embed, false);
  fn(std::string("slot_pos"), slot_pos, false);
  fn(std::string("face_proj.weight"), face_proj_w, false);
  fn(std::string("face_proj.bias"), face_proj_b, true);
  fn(std::string("face_pos"), face_pos, false);
  fn(std::string("time_mlp.0.weight"), time_w1, false);
  fn(std::string("time_mlp.0.bias"), time_b1, true);
  fn(std::string("time_mlp.1.weight"), time_w2, false);
  fn(std::string("time_mlp.1.bias"), time_b2, true);
  fn(std::string("class_embed"), class_embed, false);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    BlockParams& b = blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    if (b.skip_w.size() > 0) {
      fn(p + "skip.weight", b.skip_w, false);
      fn(p + "skip.bias", b.skip_b, true);
    }
    fn(p + "ln1.weight", b.ln1_g, true);
    fn(p + "ln1.bias", b.ln1_b, true);
    fn(p + "attn.qkv.weight", b.qkv_w, false);
    fn(p + "attn.qkv.bias", b.qkv_b, true);
    fn(p + "attn.proj.weight", b.proj_w, false);
    fn(p + "attn.proj.bias", b.proj_b, true);
    fn(p + "ln2.weight", b.ln2_g, true);
    fn(p + "ln2.bias", b.ln2_b, true);
    fn(p + "mlp.fc1.weight", b.fc1_w, false);
    fn(p + "mlp.fc1.bias", b.fc1_b, true);
    fn(p + "mlp.fc2.weight", b.fc2_w, false);
    fn(p + "mlp.fc2.bias", b.fc2_b, true);
  }
  fn(std::string("final_ln.weight"), final_ln_g, true);
  fn(std::string("final_ln.bias"), final_ln_b, true);
  fn(std::string("head.weight"), head_w, false);
  fn(std::string("head.bias"), head_b, true);
}

template <class Fn>
void DenoiserParams::for_each(Fn&& fn) const {
  const_cast<DenoiserParams*>(this)->for_each(
      [&](const std::string& name, Matrix& m, bool is_vector) { fn(name, static_cast<const Matrix&>(m), is_vector); });
}

}  // namespace meshdiff
