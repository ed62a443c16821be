#include "afl/losses.hpp"

#include <cmath>
#include <vector>

#include "afl/errors.hpp"
#include "afl/summation.hpp"

namespace afl {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::FocalBaseline: return "focal";
    case LossKind::AFL: return "afl";
    case LossKind::Dice: return "dice";
    case LossKind::CrossEntropy: return "ce";
    case LossKind::IoU: return "iou";
    case LossKind::Tversky: return "tversky";
    case LossKind::DiceCE: return "dice_ce";
    case LossKind::DiceFocal: return "dice_focal";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  for (LossKind k : kAllLossKinds) {
    if (to_string(k) == name) return k;
  }
  throw InvalidInput("unknown loss kind '" + std::string(name) + "'");
}

std::string_view to_string(AlphaMode mode) {
  return mode == AlphaMode::ClassWeighted ? "class_weighted" : "uniform";
}

AlphaMode parse_alpha_mode(std::string_view name) {
  if (name == "class_weighted") return AlphaMode::ClassWeighted;
  if (name == "uniform") return AlphaMode::Uniform;
  throw InvalidInput("unknown alpha_mode '" + std::string(name) + "'");
}

AblationFlags parse_ablation(std::string_view list) {
  AblationFlags f{false, false, false};
  while (!list.empty()) {
    const auto comma = list.find(',');
    const auto tok = list.substr(0, comma);
    if (tok == "a") {
      f.use_alpha_va = true;
    } else if (tok == "gv") {
      f.use_gamma_va = true;
    } else if (tok == "gm") {
      f.use_gamma_msa = true;
    } else if (!tok.empty() && tok != "none") {
      throw InvalidInput("unknown ablation flag '" + std::string(tok) + "' (expected a, gv, gm)");
    }
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  return f;
}

std::string to_string(const AblationFlags& f) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(f.use_alpha_va, "a");
  add(f.use_gamma_va, "gv");
  add(f.use_gamma_msa, "gm");
  return out.empty() ? "none" : out;
}

void LossSpec::validate() const {
  if (!(alpha_fixed > 0.0 && alpha_fixed < 1.0)) throw InvalidInput("alpha_fixed must lie in (0,1)");
  if (!(gamma_fixed >= 0.0)) throw InvalidInput("gamma_fixed must be >= 0");
  if (!(tversky_alpha + tversky_beta > 0.0)) throw InvalidInput("tversky_alpha + tversky_beta must be > 0");
  if (!(tversky_alpha >= 0.0 && tversky_beta >= 0.0)) throw InvalidInput("tversky weights must be >= 0");
  if (!(smooth_eps >= 0.0)) throw InvalidInput("smooth_eps must be >= 0");
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw InvalidInput("clamp_eps must lie in (0,0.5)");
  if (!std::isfinite(gamma_offset)) throw InvalidInput("gamma_offset must be finite");
}

double modulating_factor(double pt, double gamma) { return std::pow(1.0 - pt, gamma); }

VoxelLoss focal_voxel(double p, int y, double alpha, double gamma) {
  const double a = y ? alpha : 1.0 - alpha;
  // m = 1 - p_t and ln(p_t), each formed without cancellation.
  const double m = y ? 1.0 - p : p;
  const double log_pt = y ? std::log(p) : std::log1p(-p);
  const double pt = y ? p : 1.0 - p;
  const double mod = std::pow(m, gamma);

  double dl_dpt = -a * mod / pt;
  if (gamma != 0.0) dl_dpt += a * gamma * std::pow(m, gamma - 1.0) * log_pt;
  return {-a * mod * log_pt, y ? dl_dpt : -dl_dpt};
}

FocalTerms effective_terms(const AdaptiveParams& params, const LossSpec& spec) {
  FocalTerms t;
  const auto& f = spec.ablation;
  if (f.use_alpha_va) {
    t.alpha_pos = params.alpha_va;
    t.alpha_neg = spec.alpha_mode == AlphaMode::ClassWeighted ? 1.0 - params.alpha_va : params.alpha_va;
  } else {
    t.alpha_pos = spec.alpha_fixed;
    t.alpha_neg = 1.0 - spec.alpha_fixed;
  }
  if (!f.use_gamma_va && !f.use_gamma_msa) {
    t.gamma = spec.gamma_fixed;
  } else {
    t.gamma = (f.use_gamma_va ? params.gamma_va : 0.0) + (f.use_gamma_msa ? params.gamma_msa : 0.0) +
              spec.gamma_offset;
  }
  if (t.gamma < 0.0) throw InvalidInput("effective focusing exponent is negative");
  return t;
}

VoxelLoss afl_voxel(double p, int y, const AdaptiveParams& params, const LossSpec& spec) {
  const auto& f = spec.ablation;
  if (!f.use_alpha_va && !f.use_gamma_va && !f.use_gamma_msa) {
    return focal_voxel(p, y, spec.alpha_fixed, spec.gamma_fixed);
  }
  const FocalTerms t = effective_terms(params, spec);
  const VoxelLoss unit = focal_voxel(p, y, y ? 1.0 : 0.0, t.gamma);  // weight 1 on the voxel's class
  const double w = y ? t.alpha_pos : t.alpha_neg;
  return {w * unit.loss, w * unit.dloss_dp};
}

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string(what) + " is not finite");
}

template <class VoxelFn>
LossValue mean_voxel_loss(const Volume3D& pred, const MaskVolume& mask, double eps, VoxelFn&& fn) {
  require_same_dims(pred.dims(), mask.dims(), "loss");
  const std::size_t n = pred.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> grad(n);
  CompensatedSum sum;
  for (std::size_t i = 0; i < n; ++i) {
    const VoxelLoss v = fn(clamp_probability(pred[i], eps), mask[i]);
    sum.add(v.loss);
    grad[i] = v.dloss_dp * inv_n;
  }
  const double value = sum.value() * inv_n;
  require_finite(value, "loss value");
  return {value, Volume3D(pred.dims(), std::move(grad))};
}

struct Overlap {
  double inter = 0.0;  // sum p*y
  double pred = 0.0;   // sum p
  double truth = 0.0;  // sum y
};

Overlap overlap(const std::vector<double>& p, const MaskVolume& mask) {
  CompensatedSum i, s, t;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double y = mask[k];
    i.add(p[k] * y);
    s.add(p[k]);
    t.add(y);
  }
  return {i.value(), s.value(), t.value()};
}

std::vector<double> clamped(const Volume3D& pred, double eps) {
  std::vector<double> p(pred.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = clamp_probability(pred[k], eps);
  return p;
}

// 1 - (2I + s) / (P + Y + s)
LossValue dice_loss(const std::vector<double>& p, const MaskVolume& mask, double s) {
  const Overlap o = overlap(p, mask);
  const double num = 2.0 * o.inter + s;
  const double den = o.pred + o.truth + s;
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    g[k] = -(2.0 * mask[k] * den - num) / (den * den);
  }
  return {1.0 - num / den, Volume3D(mask.dims(), std::move(g))};
}

// 1 - (I + s) / (P + Y - I + s)
LossValue iou_loss(const std::vector<double>& p, const MaskVolume& mask, double s) {
  const Overlap o = overlap(p, mask);
  const double num = o.inter + s;
  const double den = o.pred + o.truth - o.inter + s;
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double y = mask[k];
    g[k] = -(y * den - num * (1.0 - y)) / (den * den);
  }
  return {1.0 - num / den, Volume3D(mask.dims(), std::move(g))};
}

// 1 - (2TP + s) / (2TP + 2a FP + 2b FN + s); a = b = 1/2 reduces to Dice.
LossValue tversky_loss(const std::vector<double>& p, const MaskVolume& mask, double a, double b, double s) {
  CompensatedSum tp_s, fp_s, fn_s;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double y = mask[k];
    tp_s.add(p[k] * y);
    fp_s.add(p[k] * (1.0 - y));
    fn_s.add((1.0 - p[k]) * y);
  }
  const double tp = tp_s.value(), fp = fp_s.value(), fn = fn_s.value();
  const double num = 2.0 * tp + s;
  const double den = 2.0 * tp + 2.0 * a * fp + 2.0 * b * fn + s;
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double y = mask[k];
    const double dnum = 2.0 * y;
    const double dden = 2.0 * y + 2.0 * a * (1.0 - y) - 2.0 * b * y;
    g[k] = -(dnum * den - num * dden) / (den * den);
  }
  return {1.0 - num / den, Volume3D(mask.dims(), std::move(g))};
}

VoxelLoss ce_voxel(double p, int y) {
  return y ? VoxelLoss{-std::log(p), -1.0 / p} : VoxelLoss{-std::log1p(-p), 1.0 / (1.0 - p)};
}

LossValue add(const LossValue& a, const LossValue& b) {
  std::vector<double> g(a.grad.size());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = a.grad[k] + b.grad[k];
  return {a.value + b.value, Volume3D(a.grad.dims(), std::move(g))};
}

}  // namespace

LossValue afl_volume(const Volume3D& pred, const MaskVolume& mask, const LossSpec& spec) {
  require_same_dims(pred.dims(), mask.dims(), "afl_volume");
  return afl_volume(pred, mask, spec, compute_adaptive_params(mask));
}

LossValue afl_volume(const Volume3D& pred, const MaskVolume& mask, const LossSpec& spec,
                     const AdaptiveParams& params) {
  return mean_voxel_loss(pred, mask, spec.clamp_eps,
                         [&](double p, int y) { return afl_voxel(p, y, params, spec); });
}

LossValue comparison_loss(const Volume3D& pred, const MaskVolume& mask, const LossSpec& spec) {
  require_same_dims(pred.dims(), mask.dims(), "comparison_loss");
  const double eps = spec.clamp_eps;
  auto focal = [&] {
    return mean_voxel_loss(pred, mask, eps,
                           [&](double p, int y) { return focal_voxel(p, y, spec.alpha_fixed, spec.gamma_fixed); });
  };
  auto ce = [&] { return mean_voxel_loss(pred, mask, eps, ce_voxel); };

  switch (spec.kind) {
    case LossKind::FocalBaseline: return focal();
    case LossKind::CrossEntropy: return ce();
    case LossKind::Dice: return dice_loss(clamped(pred, eps), mask, spec.smooth_eps);
    case LossKind::IoU: return iou_loss(clamped(pred, eps), mask, spec.smooth_eps);
    case LossKind::Tversky:
      return tversky_loss(clamped(pred, eps), mask, spec.tversky_alpha, spec.tversky_beta, spec.smooth_eps);
    case LossKind::DiceCE: return add(dice_loss(clamped(pred, eps), mask, spec.smooth_eps), ce());
    case LossKind::DiceFocal: return add(dice_loss(clamped(pred, eps), mask, spec.smooth_eps), focal());
    case LossKind::AFL: break;
  }
  throw InvalidInput("comparison_loss: kind '" + std::string(to_string(spec.kind)) + "' is not a comparison loss");
}

LossValue evaluate_loss(const Volume3D& pred, const MaskVolume& mask, const LossSpec& spec,
                        const AdaptiveParams* params) {
  if (spec.kind == LossKind::AFL) {
    return params ? afl_volume(pred, mask, spec, *params) : afl_volume(pred, mask, spec);
  }
  return comparison_loss(pred, mask, spec);
}

}  // namespace afl
