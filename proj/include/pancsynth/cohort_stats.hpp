#pragma once

#include <span>
#include <string>
#include <vector>

#include "pancsynth/grid.hpp"
#include "pancsynth/rng.hpp"
#include "pancsynth/skew_normal.hpp"

namespace pancsynth {

inline constexpr double kDefaultNeighborhoodRadiusMm = 15.0;
inline constexpr std::size_t kOffsetHistogramBins = 20;

enum class TumorType { pdac, cyst };

std::string to_string(TumorType t);
/// Accepts "PDAC" / "Cyst" (case-insensitive).
TumorType parse_tumor_type(const std::string& s);

/// Lower median: for even counts the smaller of the two middle values.
/// Throws InvariantError on empty input.
float lower_median(std::vector<float> values);

/// Slice range [zmin, zmax] occupied by a mask. Offsets along z are expressed
/// relative to this range: slice z covers the normalized interval
/// [-1 + 2(z - zmin)/n, -1 + 2(z - zmin + 1)/n] with n = zmax - zmin + 1.
struct ZExtent {
  std::int64_t zmin = 0;
  std::int64_t zmax = 0;

  std::int64_t slices() const { return zmax - zmin + 1; }
  double center() const { return 0.5 * static_cast<double>(zmin + zmax); }
  /// Normalized offset of a (possibly fractional) slice coordinate, clamped to [-1, 1].
  double offset_of(double z) const;
  /// Slice whose normalized interval contains `offset`.
  std::int64_t slice_at(double offset) const;
};

ZExtent z_extent(const Mask& mask);

struct CaseStats {
  double size_ratio = 0.0;            // tumor volume / pancreas volume
  double neighborhood_median = 0.0;   // HU
  double tumor_median = 0.0;          // HU
  double intensity_residual = 0.0;    // neighborhood_median - tumor_median
  double offset_z = 0.0;              // in [-1, 1]
};

/// Per-case statistics. The neighborhood is every pancreas voxel that is not
/// a tumor voxel and lies within `radius_mm` (Euclidean, spacing-aware) of the
/// tumor centroid. Throws InvariantError on empty masks, geometry mismatch, or
/// an empty neighborhood.
CaseStats compute_case_stats(const Volume& v, const Mask& pancreas, const Mask& tumor,
                             double radius_mm = kDefaultNeighborhoodRadiusMm);

struct RegressionParams {
  double alpha = 0.0;
  double beta = 0.0;
  double sigma_eps = 0.0;

  void validate() const;
  bool operator==(const RegressionParams&) const = default;
};

struct IntensityPair {
  double m = 0.0;      // neighborhood median
  double delta = 0.0;  // residual m - tumor median
};

/// OLS of delta on m. sigma_eps is the population standard deviation of the
/// residuals.
RegressionParams fit_intensity_regression(std::span<const IntensityPair> pairs);

/// Empirical distribution over uniform bins.
struct OffsetHistogram {
  std::vector<double> edges;          // bins + 1 ascending edges
  std::vector<double> probabilities;  // one per bin, summing to 1

  static OffsetHistogram uniform(std::size_t bins = kOffsetHistogramBins);
  static OffsetHistogram from_samples(std::span<const double> samples,
                                      std::size_t bins = kOffsetHistogramBins);
  /// Picks a bin by probability, then a uniform point inside it.
  double sample(Rng& rng) const;
  void validate() const;
  bool operator==(const OffsetHistogram&) const = default;
};

struct TumorStatsModel {
  TumorType tumor_type = TumorType::pdac;
  SkewNormalParams size_ratio_dist;
  RegressionParams intensity_regression;
  OffsetHistogram offset_z_hist = OffsetHistogram::uniform();
  double neighborhood_radius_mm = kDefaultNeighborhoodRadiusMm;
  std::size_t n_cases = 0;

  void validate() const;
  bool operator==(const TumorStatsModel&) const = default;
};

/// Fits size ratios to a skew-normal, (neighborhood median, residual) pairs
/// to the intensity regression, and offsets to a 20-bin histogram on [-1, 1].
TumorStatsModel fit_stats_model(std::span<const CaseStats> cases, double radius_mm,
                                TumorType tumor_type);

}  // namespace pancsynth
