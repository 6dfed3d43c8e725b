#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "pancsynth/errors.hpp"

namespace pancsynth {

using Index3 = std::array<std::int64_t, 3>;

/// Voxel lattice shared by a volume and the masks annotating it.
/// Axis order is (x, y, z) with x varying fastest in memory.
struct Geometry {
  std::array<std::size_t, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm / voxel
  std::array<double, 3> origin{0.0, 0.0, 0.0};   // mm

  std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
  double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims[0] * (y + dims[1] * z);
  }
  std::size_t index(const Index3& p) const {
    return index(static_cast<std::size_t>(p[0]), static_cast<std::size_t>(p[1]),
                 static_cast<std::size_t>(p[2]));
  }
  Index3 coords(std::size_t idx) const {
    const auto x = idx % dims[0];
    const auto y = (idx / dims[0]) % dims[1];
    const auto z = idx / (dims[0] * dims[1]);
    return {static_cast<std::int64_t>(x), static_cast<std::int64_t>(y),
            static_cast<std::int64_t>(z)};
  }
  bool contains(const Index3& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < 0 || p[a] >= static_cast<std::int64_t>(dims[a])) return false;
    return true;
  }

  /// Throws InvariantError unless all dims >= 1 and all spacings > 0.
  void validate() const;

  bool operator==(const Geometry&) const = default;
};

/// True when dims and spacing agree; origin is not compared.
bool same_lattice(const Geometry& a, const Geometry& b);
void require_same_lattice(const Geometry& a, const Geometry& b, const char* what);

namespace detail {
void check_values(std::span<const float> values);
void check_values(std::span<const std::int16_t> values);
}  // namespace detail

/// Dense scalar raster with value semantics.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(Geometry geometry, T fill) : geometry_(geometry) {
    geometry_.validate();
    values_.assign(geometry_.voxel_count(), fill);
    detail::check_values(values_);
  }
  Grid(Geometry geometry, std::vector<T> values)
      : geometry_(geometry), values_(std::move(values)) {
    geometry_.validate();
    if (values_.size() != geometry_.voxel_count())
      throw InvariantError("grid buffer length does not match dims");
    detail::check_values(values_);
  }

  const Geometry& geometry() const { return geometry_; }
  const std::array<std::size_t, 3>& dims() const { return geometry_.dims; }
  std::size_t size() const { return values_.size(); }

  std::span<const T> values() const { return values_; }
  std::span<T> values() { return values_; }

  const T& operator[](std::size_t i) const { return values_[i]; }
  T& operator[](std::size_t i) { return values_[i]; }

  const T& operator()(std::size_t x, std::size_t y, std::size_t z) const {
    return values_[geometry_.index(x, y, z)];
  }
  T& operator()(std::size_t x, std::size_t y, std::size_t z) {
    return values_[geometry_.index(x, y, z)];
  }
  const T& at(const Index3& p) const { return values_[geometry_.index(p)]; }
  T& at(const Index3& p) { return values_[geometry_.index(p)]; }

  bool operator==(const Grid&) const = default;

 private:
  Geometry geometry_;
  std::vector<T> values_;
};

/// CT intensities in Hounsfield units.
using Volume = Grid<float>;
/// Non-negative integer labels, 0 = background.
using Mask = Grid<std::int16_t>;

/// Number of voxels with a positive label.
std::size_t count_positive(const Mask& mask);

}  // namespace pancsynth
