#pragma once

#include <string>
#include <string_view>

#include "afl/adaptive_params.hpp"
#include "afl/volume.hpp"

namespace afl {

inline constexpr double kProbabilityEps = 1e-7;

enum class LossKind { FocalBaseline, AFL, Dice, CrossEntropy, IoU, Tversky, DiceCE, DiceFocal };

inline constexpr LossKind kAllLossKinds[] = {LossKind::FocalBaseline, LossKind::AFL,     LossKind::Dice,
                                             LossKind::CrossEntropy,  LossKind::IoU,     LossKind::Tversky,
                                             LossKind::DiceCE,        LossKind::DiceFocal};

/// Short CLI/config names: focal, afl, dice, ce, iou, tversky, dice_ce, dice_focal.
std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

/// How alpha_va weights the two classes.
///   ClassWeighted: alpha_va on foreground voxels, 1 - alpha_va on background.
///   Uniform:       alpha_va on every voxel.
enum class AlphaMode { ClassWeighted, Uniform };

std::string_view to_string(AlphaMode mode);
AlphaMode parse_alpha_mode(std::string_view name);

struct AblationFlags {
  bool use_alpha_va = true;
  bool use_gamma_va = true;
  bool use_gamma_msa = true;

  bool operator==(const AblationFlags&) const = default;
};

/// Parses a comma list drawn from {a, gv, gm}; the empty string disables all three.
AblationFlags parse_ablation(std::string_view list);
std::string to_string(const AblationFlags& flags);

struct LossSpec {
  LossKind kind = LossKind::AFL;
  double alpha_fixed = 0.25;
  double gamma_fixed = 2.0;
  double tversky_alpha = 0.3;
  double tversky_beta = 0.7;
  double smooth_eps = 1.0;
  AblationFlags ablation;
  double gamma_offset = 0.0;
  AlphaMode alpha_mode = AlphaMode::ClassWeighted;
  double clamp_eps = kProbabilityEps;

  /// Throws InvalidInput on out-of-range hyperparameters.
  void validate() const;
  bool operator==(const LossSpec&) const = default;
};

struct VoxelLoss {
  double loss = 0.0;
  double dloss_dp = 0.0;
};

struct LossValue {
  double value = 0.0;
  Volume3D grad;  // d value / d p, per voxel
};

inline double clamp_probability(double p, double eps = kProbabilityEps) {
  return p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
}

/// Probability of the true class: p for y = 1, 1 - p for y = 0.
inline double p_t(double p, int y) { return y ? p : 1.0 - p; }

/// (1 - p_t)^gamma.
double modulating_factor(double pt, double gamma);

/// -alpha_t (1 - p_t)^gamma ln(p_t) with alpha_t = alpha for y = 1 and
/// 1 - alpha for y = 0, plus its exact derivative with respect to p.
VoxelLoss focal_voxel(double p, int y, double alpha, double gamma);

/// Class weights and focusing exponent actually applied by A-FL.
struct FocalTerms {
  double alpha_pos = 0.25;
  double alpha_neg = 0.75;
  double gamma = 2.0;
};

FocalTerms effective_terms(const AdaptiveParams& params, const LossSpec& spec);

/// A-FL for one voxel. Gamma is a constant with respect to p.
VoxelLoss afl_voxel(double p, int y, const AdaptiveParams& params, const LossSpec& spec);

/// Mean A-FL over the volume; the gradient carries the 1/N factor.
LossValue afl_volume(const Volume3D& pred, const MaskVolume& mask, const LossSpec& spec);
LossValue afl_volume(const Volume3D& pred, const MaskVolume& mask, const LossSpec& spec,
                     const AdaptiveParams& params);

/// Baseline and overlap losses (every kind except AFL).
LossValue comparison_loss(const Volume3D& pred, const MaskVolume& mask, const LossSpec& spec);

/// Dispatches on spec.kind. `params` may be supplied to skip recomputing the
/// adaptive parameters of the mask.
LossValue evaluate_loss(const Volume3D& pred, const MaskVolume& mask, const LossSpec& spec,
                        const AdaptiveParams* params = nullptr);

}  // namespace afl
