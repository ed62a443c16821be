#include "afl/adaptive_params.hpp"

#include <cmath>

#include "afl/errors.hpp"
#include "afl/summation.hpp"

namespace afl {

PixelCounts count_pixels(const MaskVolume& mask) {
  PixelCounts c;
  for (std::uint8_t v : mask.values()) c.p_fg += v;
  c.p_bg = mask.size() - c.p_fg;
  return c;
}

double alpha_va(const PixelCounts& counts) {
  if (counts.total() == 0) throw InvalidInput("alpha_va: mask has no voxels");
  return static_cast<double>(counts.p_bg) / static_cast<double>(counts.total());
}

double gamma_va(const PixelCounts& counts) {
  if (counts.total() == 0) throw InvalidInput("gamma_va: mask has no voxels");
  return static_cast<double>(counts.p_fg) / static_cast<double>(counts.total());
}

namespace {

// Differentiates along one axis; `stride` is the flat-index step of that axis
// and `n` its length.
void diff_axis(std::span<const double> f, std::vector<double>& out, const Dims& d, std::size_t axis) {
  const std::size_t n = axis == 0 ? d.nz : axis == 1 ? d.ny : d.nx;
  const std::size_t stride = axis == 0 ? d.ny * d.nx : axis == 1 ? d.nx : 1;
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(z, y, x);
        const std::size_t pos = axis == 0 ? z : axis == 1 ? y : x;
        if (pos == 0) {
          out[i] = f[i + stride] - f[i];
        } else if (pos == n - 1) {
          out[i] = f[i] - f[i - stride];
        } else {
          out[i] = (f[i + stride] - f[i - stride]) / 2.0;
        }
      }
    }
  }
}

}  // namespace

GradientField spatial_gradients(const Volume3D& v) {
  const Dims& d = v.dims();
  if (d.nz < 2 || d.ny < 2 || d.nx < 2) {
    throw InvalidInput("spatial_gradients: every dimension must be >= 2, got " + d.str());
  }
  std::vector<double> gz(d.size()), gy(d.size()), gx(d.size());
  diff_axis(v.values(), gz, d, 0);
  diff_axis(v.values(), gy, d, 1);
  diff_axis(v.values(), gx, d, 2);
  return {Volume3D(d, std::move(gx)), Volume3D(d, std::move(gy)), Volume3D(d, std::move(gz))};
}

Volume3D gradient_magnitude(const GradientField& g) {
  require_same_dims(g.gx.dims(), g.gy.dims(), "gradient_magnitude");
  require_same_dims(g.gx.dims(), g.gz.dims(), "gradient_magnitude");
  std::vector<double> out(g.gx.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::sqrt(g.gx[i] * g.gx[i] + g.gy[i] * g.gy[i] + g.gz[i] * g.gz[i]);
  }
  return Volume3D(g.gx.dims(), std::move(out));
}

double mean_smoothness(const MaskVolume& mask) {
  const Volume3D mag = gradient_magnitude(spatial_gradients(mask.as_volume()));
  CompensatedSum sum;
  for (double v : mag.values()) sum.add(v);
  return sum.value() / static_cast<double>(mag.size());
}

AdaptiveParams compute_adaptive_params(const MaskVolume& mask) {
  AdaptiveParams p;
  p.counts = count_pixels(mask);
  p.alpha_va = alpha_va(p.counts);
  p.gamma_va = gamma_va(p.counts);
  p.gamma_msa = mean_smoothness(mask);
  p.gamma_adaptive = p.gamma_va + p.gamma_msa;
  return p;
}

}  // namespace afl
