#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace afl {

/// Grid extent in z-major order. Element (z, y, x) lives at z*ny*nx + y*nx + x.
struct Dims {
  std::size_t nz = 0;
  std::size_t ny = 0;
  std::size_t nx = 0;

  constexpr std::size_t size() const { return nz * ny * nx; }
  constexpr std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * ny + y) * nx + x;
  }
  bool operator==(const Dims&) const = default;

  std::string str() const;
};

/// Dense scalar field of 64-bit floats. Every value is finite.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Dims dims, std::vector<double> data);

  static Volume3D filled(Dims dims, double value);

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  double at(std::size_t z, std::size_t y, std::size_t x) const {
    return data_[dims_.index(z, y, x)];
  }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Volume3D&) const = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

/// Binary label field; every element is exactly 0 or 1.
class MaskVolume {
 public:
  MaskVolume() = default;
  MaskVolume(Dims dims, std::vector<std::uint8_t> data);

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  std::uint8_t at(std::size_t z, std::size_t y, std::size_t x) const {
    return data_[dims_.index(z, y, x)];
  }
  std::uint8_t operator[](std::size_t i) const { return data_[i]; }
  std::span<const std::uint8_t> values() const { return data_; }

  /// The mask as a 0.0/1.0 scalar field.
  Volume3D as_volume() const;

  bool operator==(const MaskVolume&) const = default;

 private:
  Dims dims_;
  std::vector<std::uint8_t> data_;
};

/// Throws InvalidInput when the two extents differ.
void require_same_dims(const Dims& a, const Dims& b, const char* what);

}  // namespace afl
