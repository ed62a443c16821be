#pragma once

// Independent reference implementations used only by the tests. They are
// written for clarity (nested loops, no shared helpers with the library) so
// that agreement with the optimized code paths is meaningful.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "afl/rng.hpp"
#include "afl/volume.hpp"

namespace oracle {

struct Grid {
  int nz, ny, nx;
  std::vector<double> v;
  double& operator()(int z, int y, int x) { return v[(z * ny + y) * nx + x]; }
  double operator()(int z, int y, int x) const { return v[(z * ny + y) * nx + x]; }
};

inline Grid from(const afl::Volume3D& vol) {
  const auto& d = vol.dims();
  Grid g{int(d.nz), int(d.ny), int(d.nx), {vol.values().begin(), vol.values().end()}};
  return g;
}

// Derivative of f along one axis at one voxel, written out per case.
inline double stencil(const Grid& f, int z, int y, int x, int axis) {
  int n = axis == 0 ? f.nz : axis == 1 ? f.ny : f.nx;
  int pos = axis == 0 ? z : axis == 1 ? y : x;
  auto at = [&](int p) {
    if (axis == 0) return f(p, y, x);
    if (axis == 1) return f(z, p, x);
    return f(z, y, p);
  };
  if (pos == 0) return at(1) - at(0);
  if (pos == n - 1) return at(n - 1) - at(n - 2);
  return 0.5 * (at(pos + 1) - at(pos - 1));
}

inline double magnitude_at(const Grid& f, int z, int y, int x) {
  const double gz = stencil(f, z, y, x, 0), gy = stencil(f, z, y, x, 1), gx = stencil(f, z, y, x, 2);
  return std::sqrt(gx * gx + gy * gy + gz * gz);
}

inline double mean_magnitude(const Grid& f) {
  long double sum = 0.0L;
  for (int z = 0; z < f.nz; ++z)
    for (int y = 0; y < f.ny; ++y)
      for (int x = 0; x < f.nx; ++x) sum += magnitude_at(f, z, y, x);
  return static_cast<double>(sum / (f.nz * f.ny * f.nx));
}

// Zero-padded 3x3x3 cross-correlation of one channel, tap [kz][ky][kx].
inline double conv_at(const Grid& in, const double* w, int z, int y, int x) {
  double s = 0.0;
  for (int kz = 0; kz < 3; ++kz)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        int zz = z + kz - 1, yy = y + ky - 1, xx = x + kx - 1;
        if (zz < 0 || yy < 0 || xx < 0 || zz >= in.nz || yy >= in.ny || xx >= in.nx) continue;
        s += w[(kz * 3 + ky) * 3 + kx] * in(zz, yy, xx);
      }
  return s;
}

// Direct evaluation of the three-layer network from its flat parameter vector.
// `active`, when given, receives the ReLU on/off pattern of both hidden layers.
inline std::vector<double> tinyseg_forward(const std::vector<double>& p, const Grid& img,
                                           std::vector<bool>* active = nullptr) {
  const int H = 8;
  const int w1 = 0, b1 = 216, w2 = 224, b2 = 1952, w3 = 1960, b3 = 1968;
  std::vector<Grid> a1(H, Grid{img.nz, img.ny, img.nx, std::vector<double>(img.v.size())});
  std::vector<Grid> a2 = a1;
  for (int c = 0; c < H; ++c)
    for (int z = 0; z < img.nz; ++z)
      for (int y = 0; y < img.ny; ++y)
        for (int x = 0; x < img.nx; ++x) a1[c](z, y, x) = std::max(0.0, p[b1 + c] + conv_at(img, &p[w1 + 27 * c], z, y, x));
  for (int co = 0; co < H; ++co)
    for (int z = 0; z < img.nz; ++z)
      for (int y = 0; y < img.ny; ++y)
        for (int x = 0; x < img.nx; ++x) {
          double s = p[b2 + co];
          for (int ci = 0; ci < H; ++ci) s += conv_at(a1[ci], &p[w2 + 27 * (co * H + ci)], z, y, x);
          a2[co](z, y, x) = std::max(0.0, s);
        }
  if (active) {
    active->clear();
    for (const auto& layer : {&a1, &a2})
      for (const auto& g : *layer)
        for (double v : g.v) active->push_back(v > 0.0);
  }
  std::vector<double> out(img.v.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double s = p[b3];
    for (int c = 0; c < H; ++c) s += p[w3 + c] * a2[c].v[i];
    out[i] = 1.0 / (1.0 + std::exp(-s));
  }
  return out;
}

// Focal term written straight from its definition.
inline double focal(double p, int y, double alpha, double gamma) {
  const double pt = y == 1 ? p : 1.0 - p;
  const double at = y == 1 ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  const double den = std::max(std::fabs(a), std::fabs(b));
  return den == 0.0 ? 0.0 : std::fabs(a - b) / den;
}

inline afl::Volume3D random_volume(afl::Rng& rng, afl::Dims d, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(d.size());
  for (auto& x : v) x = rng.uniform(lo, hi);
  return afl::Volume3D(d, std::move(v));
}

inline afl::MaskVolume random_mask(afl::Rng& rng, afl::Dims d, double p_one = 0.3) {
  std::vector<std::uint8_t> v(d.size());
  for (auto& x : v) x = rng.uniform() < p_one ? 1 : 0;
  return afl::MaskVolume(d, std::move(v));
}

}  // namespace oracle
