#pragma once

#include <cstdint>

#include "afl/volume.hpp"

namespace afl {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// A voxel is predicted foreground iff p >= threshold.
ConfusionCounts confusion(const Volume3D& pred, const MaskVolume& mask, double threshold = 0.5);

// A zero denominator means there was nothing to find or nothing to mislabel;
// such ratios are reported as 1.0 so all-background samples score perfect.
double iou(const ConfusionCounts& c);
double dsc(const ConfusionCounts& c);
double sensitivity(const ConfusionCounts& c);
double specificity(const ConfusionCounts& c);

struct SampleMetrics {
  double iou = 0.0;
  double dsc = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

SampleMetrics evaluate(const ConfusionCounts& c);

}  // namespace afl
