#pragma once

// Finite-difference check of every TinySeg3D parameter gradient.

#include <cmath>
#include <string>

#include "afl/tinyseg.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Report {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t refined = 0;  // stencil crossed a ReLU kink; re-checked with a smaller step
  std::size_t skipped = 0;  // kink within even the refined step
  double worst_rel = 0.0;
  std::size_t worst_index = 0;
};

// Relative error below rel_tol, or absolute error below abs_tol when the
// analytic gradient magnitude is under small_grad. Central differences are
// only a valid oracle where the loss is smooth, so when a +-h perturbation
// flips any ReLU (detected with the nested-loop reference forward) the
// parameter is re-checked with step refined_h; if that also straddles a kink
// the parameter is counted as skipped.
inline Report check_model(afl::TinySeg3D model, const afl::Volume3D& image, const afl::MaskVolume& mask,
                          const afl::LossSpec& spec, double h = 1e-4, double rel_tol = 1e-3, double abs_tol = 1e-7,
                          double small_grad = 1e-8, double refined_h = 1e-7) {
  model.backward(image, mask, spec);
  const std::vector<double> analytic(model.grads().begin(), model.grads().end());
  const oracle::Grid grid = oracle::from(image);
  std::vector<double> params(model.params().begin(), model.params().end());
  std::vector<bool> base_pattern, pattern;
  oracle::tinyseg_forward(params, grid, &base_pattern);

  auto smooth_at = [&](std::size_t i, double step) {
    for (double s : {step, -step}) {
      params[i] += s;
      oracle::tinyseg_forward(params, grid, &pattern);
      params[i] -= s;
      if (pattern != base_pattern) return false;
    }
    return true;
  };
  auto fd = [&](std::size_t i, double step) {
    auto p = model.params();
    const double orig = p[i];
    p[i] = orig + step;
    const double up = afl::evaluate_loss(model.forward(image), mask, spec).value;
    p[i] = orig - step;
    const double down = afl::evaluate_loss(model.forward(image), mask, spec).value;
    p[i] = orig;
    return (up - down) / (2.0 * step);
  };

  Report r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double step = h;
    // Only parameters upstream of a ReLU can move a kink.
    if (i < afl::TinySeg3D::kW3 && !smooth_at(i, h)) {
      ++r.refined;
      step = refined_h;
      if (!smooth_at(i, step)) {
        ++r.skipped;
        continue;
      }
    }
    const double estimate = fd(i, step);
    ++r.checked;
    bool ok;
    if (std::fabs(analytic[i]) < small_grad) {
      ok = std::fabs(analytic[i] - estimate) < abs_tol;
    } else {
      const double rel = oracle::rel_err(analytic[i], estimate);
      // A refined step trades truncation for round-off error; allow for it.
      const double tol = step == h ? rel_tol : std::max(rel_tol, 1e-9 / (step * std::fabs(analytic[i])));
      if (rel > r.worst_rel) {
        r.worst_rel = rel;
        r.worst_index = i;
      }
      ok = rel < tol;
    }
    if (!ok) ++r.failures;
  }
  return r;
}

// A random model with nonzero biases, so every code path carries signal.
inline afl::TinySeg3D random_model(std::uint64_t seed) {
  afl::TinySeg3D m = afl::TinySeg3D::initialized(seed);
  afl::Rng rng(seed + 1);
  auto p = m.params();
  for (std::size_t i = afl::TinySeg3D::kB1; i < afl::TinySeg3D::kW2; ++i) p[i] = rng.uniform(-0.1, 0.3);
  for (std::size_t i = afl::TinySeg3D::kB2; i < afl::TinySeg3D::kW3; ++i) p[i] = rng.uniform(-0.1, 0.3);
  p[afl::TinySeg3D::kB3] = rng.uniform(-0.5, 0.5);
  return m;
}

}  // namespace gradcheck
