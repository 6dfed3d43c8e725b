#include "pancsynth/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pancsynth {

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw InvariantError("grid dimension must be >= 1");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw InvariantError("voxel spacing must be finite and > 0");
    if (!std::isfinite(origin[a])) throw InvariantError("origin must be finite");
  }
}

bool same_lattice(const Geometry& a, const Geometry& b) {
  return a.dims == b.dims && a.spacing == b.spacing;
}

void require_same_lattice(const Geometry& a, const Geometry& b, const char* what) {
  if (!same_lattice(a, b))
    throw InvariantError(std::string("geometry mismatch: ") + what);
}

namespace detail {

void check_values(std::span<const float> values) {
  if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); }))
    throw InvariantError("volume contains non-finite values");
}

void check_values(std::span<const std::int16_t> values) {
  if (std::any_of(values.begin(), values.end(), [](std::int16_t v) { return v < 0; }))
    throw InvariantError("mask contains negative labels");
}

}  // namespace detail

std::size_t count_positive(const Mask& mask) {
  const auto v = mask.values();
  return static_cast<std::size_t>(
      std::count_if(v.begin(), v.end(), [](std::int16_t l) { return l > 0; }));
}

}  // namespace pancsynth
