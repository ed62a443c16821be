#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "afl/rng.hpp"
#include "afl/volume.hpp"

namespace afl {

enum class VolumeBin { Large, Medium, Small };
enum class SmoothnessBin { Good, Medium, Poor };

inline constexpr VolumeBin kVolumeBins[] = {VolumeBin::Large, VolumeBin::Medium, VolumeBin::Small};
inline constexpr SmoothnessBin kSmoothnessBins[] = {SmoothnessBin::Good, SmoothnessBin::Medium,
                                                    SmoothnessBin::Poor};

/// Foreground fraction targets: 0.05, 0.01, 0.002.
double target_fraction(VolumeBin bin);
/// Radial perturbation amplitude as a fraction of the base radius: 0.0, 0.2, 0.5.
double perturbation_amplitude(SmoothnessBin bin);

std::string_view to_string(VolumeBin bin);
std::string_view to_string(SmoothnessBin bin);
VolumeBin parse_volume_bin(std::string_view name);
SmoothnessBin parse_smoothness_bin(std::string_view name);

/// Band-limited random function on the unit sphere: a weighted sum of
/// Chebyshev polynomials T_f(u . d_k) of degree f in [2, 6] along random
/// axes d_k, scaled so its maximum magnitude over a dense Fibonacci grid is 1.
class AngularField {
 public:
  static constexpr int kTerms = 10;
  static constexpr int kGridPoints = 2048;

  static AngularField random(Rng& rng);

  double operator()(double uz, double uy, double ux) const;

  /// Mean of (1 + a*eta)^3 over the sphere grid; the volume of a star-convex
  /// blob of base radius r0 is (4/3) pi r0^3 times this.
  double mean_cubed_radius_factor(double amplitude) const;

 private:
  struct Term {
    double dz, dy, dx;
    int degree;
    double weight;
  };
  double raw(double uz, double uy, double ux) const;

  std::array<Term, kTerms> terms_{};
  double offset_ = 0.0;
  double scale_ = 1.0;
};

/// Voxels whose centre lies within r0 * (1 + amplitude * eta(direction)) of `center`.
MaskVolume voxelize_blob(const Dims& dims, const std::array<double, 3>& center, double r0, double amplitude,
                         const AngularField& eta);

struct PhantomSpec {
  Dims dims{32, 32, 32};
  VolumeBin volume_bin = VolumeBin::Large;
  SmoothnessBin smoothness_bin = SmoothnessBin::Good;
  double noise_sigma = 0.3;
  double fg_intensity = 1.0;
  double bg_intensity = 0.0;
  std::uint64_t seed = 0;
};

struct Phantom {
  Volume3D image;
  MaskVolume mask;
  double base_radius = 0.0;
  std::array<double, 3> center{};
};

/// Deterministic in `spec`. Draw order from Rng(spec.seed): angular field,
/// centre position, then one normal per voxel in z-major order.
/// Throws InvalidInput when the target volume needs a base radius below 2
/// voxels or the blob cannot be contained in the grid.
Phantom make_phantom(const PhantomSpec& spec);

struct DatasetSpec {
  std::size_t n = 60;
  Dims dims{32, 32, 32};
  /// Weights over the 9 (volume, smoothness) combinations, volume-major:
  /// index = 3 * volume_bin + smoothness_bin.
  std::array<double, 9> mix{1, 1, 1, 1, 1, 1, 1, 1, 1};
  std::uint64_t seed = 0;
  double noise_sigma = 0.3;
};

struct ManifestEntry {
  std::size_t id = 0;
  std::string image;  // header file names, relative to the manifest directory
  std::string mask;
  VolumeBin volume_bin = VolumeBin::Large;
  SmoothnessBin smoothness_bin = SmoothnessBin::Good;
  std::uint64_t seed = 0;
  double realized_fg_fraction = 0.0;
  bool train = true;
};

struct Manifest {
  DatasetSpec spec;
  std::vector<ManifestEntry> samples;
  std::filesystem::path dir;  // directory holding the manifest; not serialized

  std::vector<ManifestEntry> split(bool train) const;
};

/// Training samples have even ids, validation samples odd ids.
inline bool is_train_index(std::size_t id) { return id % 2 == 0; }

/// Bin combination for each sample: sample i takes the combination with the
/// largest deficit w_k * (i + 1) / sum(w) - count_k, lowest index on ties.
/// Uniform weights give plain round-robin.
std::vector<std::size_t> assign_bins(std::size_t n, const std::array<double, 9>& mix);

std::string sample_name(std::size_t id);

/// Writes every phantom pair plus `manifest.json` into `out_dir`.
Manifest make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

/// Accepts a manifest file or the directory containing `manifest.json`.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& file);

}  // namespace afl
