#pragma once

#include <cstdint>

#include "afl/volume.hpp"

namespace afl {

struct PixelCounts {
  std::uint64_t p_fg = 0;
  std::uint64_t p_bg = 0;

  std::uint64_t total() const { return p_fg + p_bg; }
  bool operator==(const PixelCounts&) const = default;
};

/// Per-axis derivatives of a scalar field at unit voxel spacing.
struct GradientField {
  Volume3D gx;
  Volume3D gy;
  Volume3D gz;
};

/// Per-sample loss parameters derived from a ground-truth mask only.
///   alpha_va       background fraction
///   gamma_va       foreground fraction (alpha_va + gamma_va == 1)
///   gamma_msa      mean gradient magnitude of the mask over all voxels
///   gamma_adaptive gamma_va + gamma_msa
struct AdaptiveParams {
  PixelCounts counts;
  double alpha_va = 1.0;
  double gamma_va = 0.0;
  double gamma_msa = 0.0;
  double gamma_adaptive = 0.0;

  bool operator==(const AdaptiveParams&) const = default;
};

PixelCounts count_pixels(const MaskVolume& mask);

/// p_bg / (p_fg + p_bg). Throws InvalidInput on an empty count.
double alpha_va(const PixelCounts& counts);
/// p_fg / (p_fg + p_bg). Throws InvalidInput on an empty count.
double gamma_va(const PixelCounts& counts);

/// Central differences (f[i+1] - f[i-1]) / 2 in the interior and one-sided
/// differences on the two boundary planes of each axis. Every dimension must be >= 2.
GradientField spatial_gradients(const Volume3D& v);

/// Per-voxel Euclidean norm of the three components.
Volume3D gradient_magnitude(const GradientField& g);

/// Mean of the gradient magnitude of the 0/1 mask field over all voxels.
double mean_smoothness(const MaskVolume& mask);

/// All parameters for one mask. An all-background mask is valid and yields
/// alpha_va = 1 with every gamma term 0.
AdaptiveParams compute_adaptive_params(const MaskVolume& mask);

}  // namespace afl
