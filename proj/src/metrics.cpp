#include "afl/metrics.hpp"

#include "afl/errors.hpp"

namespace afl {

ConfusionCounts confusion(const Volume3D& pred, const MaskVolume& mask, double threshold) {
  require_same_dims(pred.dims(), mask.dims(), "confusion");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidInput("threshold must lie in (0,1)");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold;
    const bool y = mask[i] != 0;
    if (p && y) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (y) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

namespace {
double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

double iou(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp + c.fn); }
double dsc(const ConfusionCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn); }
double sensitivity(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
double specificity(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp); }

SampleMetrics evaluate(const ConfusionCounts& c) { return {iou(c), dsc(c), sensitivity(c), specificity(c)}; }

}  // namespace afl
