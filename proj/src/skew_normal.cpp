#include "pancsynth/skew_normal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pancsynth/errors.hpp"

namespace pancsynth {
namespace {
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}

double SkewNormalParams::delta() const { return shape / std::sqrt(1.0 + shape * shape); }

double SkewNormalParams::mean() const { return location + scale * delta() * kSqrt2OverPi; }

double SkewNormalParams::variance() const {
  const double d = delta();
  return scale * scale * (1.0 - 2.0 * d * d / std::numbers::pi);
}

double SkewNormalParams::skewness() const {
  const double mu = delta() * kSqrt2OverPi;
  return (4.0 - std::numbers::pi) / 2.0 * std::pow(mu, 3) / std::pow(1.0 - mu * mu, 1.5);
}

void SkewNormalParams::validate() const {
  if (!std::isfinite(location) || !std::isfinite(scale) || !std::isfinite(shape))
    throw InvariantError("skew-normal parameters must be finite");
  if (!(scale > 0.0)) throw InvariantError("skew-normal scale must be > 0");
}

SkewNormalParams fit_skew_normal(std::span<const double> samples) {
  if (samples.size() < 3) throw InvariantError("skew-normal fit needs at least 3 samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double x : samples) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (!(m2 > 0.0)) throw InvariantError("skew-normal fit needs non-zero sample variance");

  double gamma = m3 / std::pow(m2, 1.5);
  gamma = std::clamp(gamma, -kMaxSkewness, kMaxSkewness);

  // Invert skewness(delta): |mu_z|^3 relationship in closed form.
  const double g23 = std::pow(std::fabs(gamma), 2.0 / 3.0);
  const double c = std::pow((4.0 - std::numbers::pi) / 2.0, 2.0 / 3.0);
  double delta = std::sqrt(std::numbers::pi / 2.0 * g23 / (g23 + c));
  if (gamma < 0.0) delta = -delta;

  SkewNormalParams p;
  p.shape = delta / std::sqrt(1.0 - delta * delta);
  p.scale = std::sqrt(m2 / (1.0 - 2.0 * delta * delta / std::numbers::pi));
  p.location = mean - p.scale * delta * kSqrt2OverPi;
  return p;
}

double sample_skew_normal(const SkewNormalParams& p, Rng& rng) {
  const double d = p.delta();
  const double u0 = standard_normal(rng);
  const double u1 = standard_normal(rng);
  const double z = d * std::fabs(u0) + std::sqrt(1.0 - d * d) * u1;
  return p.location + p.scale * z;
}

}  // namespace pancsynth
