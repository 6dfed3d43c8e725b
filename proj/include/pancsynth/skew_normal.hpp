#pragma once

#include <span>

#include "pancsynth/rng.hpp"

namespace pancsynth {

/// Azzalini skew-normal SN(location, scale, shape).
struct SkewNormalParams {
  double location = 0.0;
  double scale = 1.0;
  double shape = 0.0;

  double delta() const;
  double mean() const;
  double variance() const;
  double skewness() const;
  /// Throws InvariantError unless scale > 0 and every field is finite.
  void validate() const;

  bool operator==(const SkewNormalParams&) const = default;
};

/// Largest |skewness| accepted by the moment inversion; the family supremum
/// is ~0.99527.
inline constexpr double kMaxSkewness = 0.995;

/// Method-of-moments fit. Population moments are used, so the fitted mean and
/// variance reproduce the sample's. Requires >= 3 samples with non-zero variance.
SkewNormalParams fit_skew_normal(std::span<const double> samples);

/// location + scale * (delta |u0| + sqrt(1 - delta^2) u1), u0, u1 ~ N(0, 1).
double sample_skew_normal(const SkewNormalParams& p, Rng& rng);

}  // namespace pancsynth
