#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "afl/adaptive_params.hpp"
#include "afl/losses.hpp"
#include "afl/volume.hpp"

namespace afl {

/// Three-layer 3D segmentation network:
///   conv 1->8, 3x3x3, pad 1, ReLU
///   conv 8->8, 3x3x3, pad 1, ReLU
///   conv 8->1, 1x1x1, logistic
/// All convolutions are cross-correlations over the zero-padded input, so the
/// output has the input's dims. Parameters live in one flat buffer:
///   [w1 (8x27) | b1 (8) | w2 (8x8x27) | b2 (8) | w3 (8) | b3 (1)]
/// with w2 indexed [out][in][kz][ky][kx].
class TinySeg3D {
 public:
  static constexpr std::size_t kHidden = 8;
  static constexpr std::size_t kTaps = 27;
  static constexpr std::size_t kW1 = 0;
  static constexpr std::size_t kB1 = kW1 + kHidden * kTaps;
  static constexpr std::size_t kW2 = kB1 + kHidden;
  static constexpr std::size_t kB2 = kW2 + kHidden * kHidden * kTaps;
  static constexpr std::size_t kW3 = kB2 + kHidden;
  static constexpr std::size_t kB3 = kW3 + kHidden;
  static constexpr std::size_t kParamCount = kB3 + 1;
  static_assert(kParamCount == 1969);

  /// All parameters zero; forward() then returns 0.5 everywhere.
  TinySeg3D();

  /// He-normal conv weights drawn from Rng(seed) in buffer order, zero biases.
  static TinySeg3D initialized(std::uint64_t seed);

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  std::span<double> velocity() { return velocity_; }
  std::span<const double> velocity() const { return velocity_; }

  /// Per-voxel foreground probability.
  Volume3D forward(const Volume3D& image) const;

  /// Runs forward and backward, stores d(loss)/d(param) in grads(), and
  /// returns the loss together with the prediction it was computed on.
  struct Step {
    double loss = 0.0;
    Volume3D prediction;
  };
  Step backward(const Volume3D& image, const MaskVolume& mask, const LossSpec& spec,
                const AdaptiveParams* params = nullptr);

  /// Little-endian dump: magic "TSEG3D01", u32 version, u32 tensor count,
  /// per tensor u32 rank + u32 extents, then every parameter as f64.
  void save(const std::filesystem::path& file) const;
  static TinySeg3D load(const std::filesystem::path& file);

 private:
  struct Activations;
  Activations run(const Volume3D& image) const;

  std::vector<double> params_;
  std::vector<double> grads_;
  std::vector<double> velocity_;
};

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0001;
};

/// v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v
void sgd_step(std::span<double> weights, std::span<const double> grads, std::span<double> velocity,
              const SgdConfig& cfg);
void sgd_step(TinySeg3D& model, const SgdConfig& cfg);

namespace conv {

// Building blocks shared with the tests. `d` is the spatial extent of every
// channel; `w` points at 27 taps ordered [kz][ky][kx], tap (1,1,1) central.

/// out(v) += sum_k w[k] * in(v + offset_k), zero outside the grid.
void accumulate(const double* in, double* out, const Dims& d, const double* w);
/// in_grad(v + offset_k) += w[k] * out_grad(v).
void input_grad(const double* out_grad, double* in_grad, const Dims& d, const double* w);
/// w_grad[k] += sum_v out_grad(v) * in(v + offset_k).
void weight_grad(const double* in, const double* out_grad, const Dims& d, double* w_grad);

// Multi-channel forms, bitwise equal to looping the single-channel calls
// (channel-major, then tap) but traversing the grid once, row by row.
// Channel c of a buffer starts at c * d.size(); channel c of `w` at c * w_stride.

/// Sum over `channels` inputs of accumulate(in[c], out, w[c]).
void accumulate(const double* in, std::size_t channels, double* out, const Dims& d, const double* w,
                std::size_t w_stride);
/// Sum over `channels` output gradients of input_grad(out_grad[c], in_grad, w[c]).
void input_grad(const double* out_grad, std::size_t channels, double* in_grad, const Dims& d, const double* w,
                std::size_t w_stride);
/// weight_grad(in[c], out_grad, w_grad[c]) for every channel c.
void weight_grad(const double* in, std::size_t channels, const double* out_grad, const Dims& d, double* w_grad,
                 std::size_t w_stride);

}  // namespace conv

}  // namespace afl
