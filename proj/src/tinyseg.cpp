#include "afl/tinyseg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "afl/errors.hpp"
#include "afl/rng.hpp"

namespace afl {

namespace conv {
namespace {

struct TapRange {
  std::ptrdiff_t shift;  // flat-index offset of the tap
  std::size_t z0, z1, y0, y1, x0, x1;
};

TapRange tap_range(const Dims& d, int k) {
  const int oz = k / 9 - 1, oy = (k / 3) % 3 - 1, ox = k % 3 - 1;
  auto lo = [](int o) { return static_cast<std::size_t>(o < 0 ? 1 : 0); };
  auto hi = [](std::size_t n, int o) { return o > 0 ? n - 1 : n; };
  const auto ny = static_cast<std::ptrdiff_t>(d.ny), nx = static_cast<std::ptrdiff_t>(d.nx);
  return {(oz * ny + oy) * nx + ox, lo(oz), hi(d.nz, oz), lo(oy), hi(d.ny, oy), lo(ox), hi(d.nx, ox)};
}

}  // namespace

std::array<TapRange, 27> tap_ranges(const Dims& d) {
  std::array<TapRange, 27> r;
  for (int k = 0; k < 27; ++k) r[k] = tap_range(d, k);
  return r;
}

void accumulate(const double* in, std::size_t channels, double* out, const Dims& d, const double* w,
                std::size_t w_stride) {
  const auto taps = tap_ranges(d);
  const std::size_t n = d.size();
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      const std::size_t row = d.index(z, y, 0);
      double* dst = out + row;
      for (std::size_t c = 0; c < channels; ++c) {
        const double* wc = w + c * w_stride;
        const double* base = in + c * n + row;
        for (int k = 0; k < 27; ++k) {
          const double wk = wc[k];
          const TapRange& r = taps[k];
          if (wk == 0.0 || z < r.z0 || z >= r.z1 || y < r.y0 || y >= r.y1) continue;
          const double* src = base + r.shift;
          for (std::size_t x = r.x0; x < r.x1; ++x) dst[x] += wk * src[x];
        }
      }
    }
  }
}

void input_grad(const double* out_grad, std::size_t channels, double* in_grad, const Dims& d, const double* w,
                std::size_t w_stride) {
  const auto taps = tap_ranges(d);
  const std::size_t n = d.size();
  // Gather form: input row (z, y) receives output row (z - oz, y - oy) through tap k.
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* wc = w + c * w_stride;
        for (int k = 0; k < 27; ++k) {
          const double wk = wc[k];
          if (wk == 0.0) continue;
          const TapRange& r = taps[k];
          const auto zo = static_cast<std::ptrdiff_t>(z) - (k / 9 - 1);
          const auto yo = static_cast<std::ptrdiff_t>(y) - ((k / 3) % 3 - 1);
          if (zo < static_cast<std::ptrdiff_t>(r.z0) || zo >= static_cast<std::ptrdiff_t>(r.z1) ||
              yo < static_cast<std::ptrdiff_t>(r.y0) || yo >= static_cast<std::ptrdiff_t>(r.y1)) {
            continue;
          }
          const std::size_t row = d.index(static_cast<std::size_t>(zo), static_cast<std::size_t>(yo), 0);
          const double* src = out_grad + c * n + row;
          double* dst = in_grad + static_cast<std::ptrdiff_t>(row) + r.shift;
          for (std::size_t x = r.x0; x < r.x1; ++x) dst[x] += wk * src[x];
        }
      }
    }
  }
}

void weight_grad(const double* in, std::size_t channels, const double* out_grad, const Dims& d, double* w_grad,
                 std::size_t w_stride) {
  const auto taps = tap_ranges(d);
  const std::size_t n = d.size();
  // Four interleaved partial sums per tap, combined in a fixed order.
  std::vector<double> acc(channels * 27 * 4, 0.0);
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      const std::size_t row = d.index(z, y, 0);
      const double* g = out_grad + row;
      for (std::size_t c = 0; c < channels; ++c) {
        const double* base = in + c * n + row;
        for (int k = 0; k < 27; ++k) {
          const TapRange& r = taps[k];
          if (z < r.z0 || z >= r.z1 || y < r.y0 || y >= r.y1) continue;
          const double* src = base + r.shift;
          double* a = acc.data() + (c * 27 + k) * 4;
          std::size_t x = r.x0;
          for (; x + 4 <= r.x1; x += 4) {
            a[0] += g[x] * src[x];
            a[1] += g[x + 1] * src[x + 1];
            a[2] += g[x + 2] * src[x + 2];
            a[3] += g[x + 3] * src[x + 3];
          }
          for (; x < r.x1; ++x) a[0] += g[x] * src[x];
        }
      }
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    for (int k = 0; k < 27; ++k) {
      const double* a = acc.data() + (c * 27 + k) * 4;
      w_grad[c * w_stride + k] += (a[0] + a[1]) + (a[2] + a[3]);
    }
  }
}

void accumulate(const double* in, double* out, const Dims& d, const double* w) { accumulate(in, 1, out, d, w, 27); }

void input_grad(const double* out_grad, double* in_grad, const Dims& d, const double* w) {
  input_grad(out_grad, 1, in_grad, d, w, 27);
}

void weight_grad(const double* in, const double* out_grad, const Dims& d, double* w_grad) {
  weight_grad(in, 1, out_grad, d, w_grad, 27);
}

}  // namespace conv

// -----------------------------------------------------------------------------

struct TinySeg3D::Activations {
  Dims dims;
  std::vector<double> a1;  // kHidden channels, post-ReLU
  std::vector<double> a2;
  std::vector<double> prob;
};

TinySeg3D::TinySeg3D()
    : params_(kParamCount, 0.0), grads_(kParamCount, 0.0), velocity_(kParamCount, 0.0) {}

TinySeg3D TinySeg3D::initialized(std::uint64_t seed) {
  TinySeg3D m;
  Rng rng(seed);
  const double s1 = std::sqrt(2.0 / kTaps);
  const double s2 = std::sqrt(2.0 / (kHidden * kTaps));
  const double s3 = std::sqrt(1.0 / kHidden);
  for (std::size_t i = kW1; i < kB1; ++i) m.params_[i] = s1 * rng.normal();
  for (std::size_t i = kW2; i < kB2; ++i) m.params_[i] = s2 * rng.normal();
  for (std::size_t i = kW3; i < kB3; ++i) m.params_[i] = s3 * rng.normal();
  return m;
}

TinySeg3D::Activations TinySeg3D::run(const Volume3D& image) const {
  const Dims& d = image.dims();
  if (d.nz < 3 || d.ny < 3 || d.nx < 3) {
    throw InvalidInput("TinySeg3D needs every dimension >= 3, got " + d.str());
  }
  const std::size_t n = d.size();
  const double* w = params_.data();
  Activations act{d, std::vector<double>(kHidden * n), std::vector<double>(kHidden * n), std::vector<double>(n)};
  const double* x = image.values().data();

  for (std::size_t c = 0; c < kHidden; ++c) {
    double* out = act.a1.data() + c * n;
    std::fill(out, out + n, w[kB1 + c]);
    conv::accumulate(x, out, d, w + kW1 + c * kTaps);
    for (std::size_t i = 0; i < n; ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  }
  for (std::size_t co = 0; co < kHidden; ++co) {
    double* out = act.a2.data() + co * n;
    std::fill(out, out + n, w[kB2 + co]);
    conv::accumulate(act.a1.data(), kHidden, out, d, w + kW2 + co * kHidden * kTaps, kTaps);
    for (std::size_t i = 0; i < n; ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  }
  std::vector<double> logit(n, w[kB3]);
  for (std::size_t c = 0; c < kHidden; ++c) {
    const double wc = w[kW3 + c];
    const double* a = act.a2.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) logit[i] += wc * a[i];
  }
  for (std::size_t i = 0; i < n; ++i) act.prob[i] = 1.0 / (1.0 + std::exp(-logit[i]));
  return act;
}

Volume3D TinySeg3D::forward(const Volume3D& image) const {
  Activations act = run(image);
  return Volume3D(act.dims, std::move(act.prob));
}

TinySeg3D::Step TinySeg3D::backward(const Volume3D& image, const MaskVolume& mask, const LossSpec& spec,
                                    const AdaptiveParams* adaptive) {
  require_same_dims(image.dims(), mask.dims(), "TinySeg3D::backward");
  Activations act = run(image);
  const Dims d = act.dims;
  const std::size_t n = d.size();
  Volume3D prediction(d, std::move(act.prob));
  const LossValue lv = evaluate_loss(prediction, mask, spec, adaptive);

  std::fill(grads_.begin(), grads_.end(), 0.0);
  const double* w = params_.data();
  double* g = grads_.data();

  // Output layer. The loss gradient is taken with respect to the clamped
  // probability and passed straight through the clamp.
  std::vector<double> dlogit(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = prediction[i];
    dlogit[i] = lv.grad[i] * p * (1.0 - p);
  }
  double gb3 = 0.0;
  for (double v : dlogit) gb3 += v;
  g[kB3] = gb3;

  std::vector<double> dz2(kHidden * n);
  for (std::size_t c = 0; c < kHidden; ++c) {
    const double* a = act.a2.data() + c * n;
    double* dz = dz2.data() + c * n;
    const double wc = w[kW3 + c];
    double gw = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gw += dlogit[i] * a[i];
      dz[i] = a[i] > 0.0 ? wc * dlogit[i] : 0.0;
      gb += dz[i];
    }
    g[kW3 + c] = gw;
    g[kB2 + c] = gb;
  }

  // Middle layer: weight gradients and backpropagation into a1.
  std::vector<double> dz1(kHidden * n, 0.0);
  for (std::size_t co = 0; co < kHidden; ++co) {
    conv::weight_grad(act.a1.data(), kHidden, dz2.data() + co * n, d, g + kW2 + co * kHidden * kTaps, kTaps);
  }
  for (std::size_t ci = 0; ci < kHidden; ++ci) {
    conv::input_grad(dz2.data(), kHidden, dz1.data() + ci * n, d, w + kW2 + ci * kTaps, kHidden * kTaps);
  }
  const double* x = image.values().data();
  for (std::size_t c = 0; c < kHidden; ++c) {
    const double* a = act.a1.data() + c * n;
    double* dz = dz1.data() + c * n;
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(a[i] > 0.0)) dz[i] = 0.0;
      gb += dz[i];
    }
    g[kB1 + c] = gb;
    conv::weight_grad(x, dz, d, g + kW1 + c * kTaps);
  }

  for (double v : grads_) {
    if (!std::isfinite(v)) throw NumericalError("non-finite parameter gradient");
  }
  return {lv.value, std::move(prediction)};
}

// --- serialization -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'S', 'E', 'G', '3', 'D', '0', '1'};
constexpr std::uint32_t kVersion = 1;

struct TensorShape {
  std::vector<std::uint32_t> extents;
};

std::vector<TensorShape> shapes() {
  const std::uint32_t h = TinySeg3D::kHidden;
  return {{{h, 1, 3, 3, 3}}, {{h}}, {{h, h, 3, 3, 3}}, {{h}}, {{1, h, 1, 1, 1}}, {{1}}};
}

template <class T>
void put_le(std::string& out, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    out.append(b, sizeof(T));
  } else {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("model file truncated");
  char b[sizeof(T)];
  std::memcpy(b, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void TinySeg3D::save(const std::filesystem::path& file) const {
  std::string out(kMagic, sizeof kMagic);
  const auto sh = shapes();
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(sh.size()));
  for (const auto& s : sh) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.extents.size()));
    for (auto e : s.extents) put_le<std::uint32_t>(out, e);
  }
  for (double v : params_) put_le<double>(out, v);
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + file.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

TinySeg3D TinySeg3D::load(const std::filesystem::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw DataError("cannot open " + file.string());
  const std::string in((std::istreambuf_iterator<char>(f)), {});
  if (in.size() < sizeof kMagic || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError(file.string() + " is not a TinySeg3D model file");
  }
  std::size_t pos = sizeof kMagic;
  if (get_le<std::uint32_t>(in, pos) != kVersion) throw DataError("unsupported model file version");
  const auto expected = shapes();
  if (get_le<std::uint32_t>(in, pos) != expected.size()) throw DataError("unexpected tensor count");
  for (const auto& s : expected) {
    if (get_le<std::uint32_t>(in, pos) != s.extents.size()) throw DataError("unexpected tensor rank");
    for (auto e : s.extents) {
      if (get_le<std::uint32_t>(in, pos) != e) throw DataError("unexpected tensor extent");
    }
  }
  TinySeg3D m;
  for (auto& v : m.params_) v = get_le<double>(in, pos);
  if (pos != in.size()) throw DataError("trailing bytes in model file");
  return m;
}

// --- optimizer ---------------------------------------------------------------

void sgd_step(std::span<double> weights, std::span<const double> grads, std::span<double> velocity,
              const SgdConfig& cfg) {
  if (weights.size() != grads.size() || weights.size() != velocity.size()) {
    throw InvalidInput("sgd_step: buffer sizes differ");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + (grads[i] + cfg.weight_decay * weights[i]);
    weights[i] -= cfg.lr * velocity[i];
  }
}

void sgd_step(TinySeg3D& model, const SgdConfig& cfg) {
  sgd_step(model.params(), model.grads(), model.velocity(), cfg);
}

}  // namespace afl
