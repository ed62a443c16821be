#include "afl/volume.hpp"

#include <cmath>

#include "afl/errors.hpp"

namespace afl {

std::string Dims::str() const {
  return std::to_string(nz) + "x" + std::to_string(ny) + "x" + std::to_string(nx);
}

Volume3D::Volume3D(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  if (data_.size() != dims_.size()) {
    throw InvalidInput("volume data length " + std::to_string(data_.size()) +
                       " does not match dims " + dims_.str());
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw NumericalError("non-finite value in volume");
  }
}

Volume3D Volume3D::filled(Dims dims, double value) {
  return Volume3D(dims, std::vector<double>(dims.size(), value));
}

MaskVolume::MaskVolume(Dims dims, std::vector<std::uint8_t> data)
    : dims_(dims), data_(std::move(data)) {
  if (data_.size() != dims_.size()) {
    throw InvalidInput("mask data length " + std::to_string(data_.size()) +
                       " does not match dims " + dims_.str());
  }
  for (std::uint8_t v : data_) {
    if (v > 1) throw DataError("mask value " + std::to_string(v) + " is not 0 or 1");
  }
}

Volume3D MaskVolume::as_volume() const {
  std::vector<double> out(data_.begin(), data_.end());
  return Volume3D(dims_, std::move(out));
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) {
    throw InvalidInput(std::string(what) + ": dims " + a.str() + " vs " + b.str());
  }
}

}  // namespace afl
