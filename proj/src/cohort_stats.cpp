#include "pancsynth/cohort_stats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace pancsynth {

std::string to_string(TumorType t) { return t == TumorType::pdac ? "PDAC" : "Cyst"; }

TumorType parse_tumor_type(const std::string& s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "pdac") return TumorType::pdac;
  if (lower == "cyst") return TumorType::cyst;
  throw InvariantError("unknown tumor type '" + s + "' (expected PDAC or Cyst)");
}

float lower_median(std::vector<float> values) {
  if (values.empty()) throw InvariantError("median of an empty set");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

double ZExtent::offset_of(double z) const {
  const double half = 0.5 * static_cast<double>(slices());
  return std::clamp((z - center()) / half, -1.0, 1.0);
}

std::int64_t ZExtent::slice_at(double offset) const {
  const double n = static_cast<double>(slices());
  const auto k = static_cast<std::int64_t>(std::floor((offset + 1.0) / 2.0 * n));
  return zmin + std::clamp<std::int64_t>(k, 0, slices() - 1);
}

ZExtent z_extent(const Mask& mask) {
  const auto& g = mask.geometry();
  const std::size_t plane = g.dims[0] * g.dims[1];
  std::int64_t lo = -1, hi = -1;
  for (std::size_t z = 0; z < g.dims[2]; ++z) {
    const auto begin = mask.values().begin() + static_cast<std::ptrdiff_t>(z * plane);
    if (std::any_of(begin, begin + static_cast<std::ptrdiff_t>(plane),
                    [](std::int16_t l) { return l > 0; })) {
      if (lo < 0) lo = static_cast<std::int64_t>(z);
      hi = static_cast<std::int64_t>(z);
    }
  }
  if (lo < 0) throw InvariantError("mask is empty");
  return {lo, hi};
}

CaseStats compute_case_stats(const Volume& v, const Mask& pancreas, const Mask& tumor,
                             double radius_mm) {
  require_same_lattice(v.geometry(), pancreas.geometry(), "pancreas mask vs volume");
  require_same_lattice(v.geometry(), tumor.geometry(), "tumor mask vs volume");
  if (!(radius_mm > 0.0)) throw InvariantError("neighborhood radius must be > 0");
  const auto& g = v.geometry();

  std::size_t n_pancreas = 0;
  std::vector<float> tumor_values;
  std::array<double, 3> centroid{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (pancreas[i] > 0) ++n_pancreas;
    if (tumor[i] > 0) {
      tumor_values.push_back(v[i]);
      const auto p = g.coords(i);
      for (int a = 0; a < 3; ++a) centroid[a] += static_cast<double>(p[a]);
    }
  }
  if (n_pancreas == 0) throw InvariantError("pancreas mask is empty");
  if (tumor_values.empty()) throw InvariantError("tumor mask is empty");
  const double n_tumor = static_cast<double>(tumor_values.size());
  for (auto& c : centroid) c /= n_tumor;

  std::array<std::int64_t, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    const double reach = radius_mm / g.spacing[a];
    lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(centroid[a] - reach)));
    hi[a] = std::min<std::int64_t>(static_cast<std::int64_t>(g.dims[a]) - 1,
                                   static_cast<std::int64_t>(std::ceil(centroid[a] + reach)));
  }
  const double r2 = radius_mm * radius_mm;
  std::vector<float> neighborhood;
  for (auto z = lo[2]; z <= hi[2]; ++z)
    for (auto y = lo[1]; y <= hi[1]; ++y)
      for (auto x = lo[0]; x <= hi[0]; ++x) {
        const Index3 p{x, y, z};
        const std::size_t i = g.index(p);
        if (pancreas[i] <= 0 || tumor[i] > 0) continue;
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double d = (static_cast<double>(p[a]) - centroid[a]) * g.spacing[a];
          d2 += d * d;
        }
        if (d2 <= r2) neighborhood.push_back(v[i]);
      }
  if (neighborhood.empty())
    throw InvariantError("no pancreas voxels within the neighborhood radius of the tumor "
                         "centroid; increase the radius");

  CaseStats s;
  s.size_ratio = n_tumor / static_cast<double>(n_pancreas);
  s.neighborhood_median = lower_median(std::move(neighborhood));
  s.tumor_median = lower_median(std::move(tumor_values));
  s.intensity_residual = s.neighborhood_median - s.tumor_median;
  s.offset_z = z_extent(pancreas).offset_of(centroid[2]);
  return s;
}

void RegressionParams::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(sigma_eps))
    throw InvariantError("regression parameters must be finite");
  if (sigma_eps < 0.0) throw InvariantError("sigma_eps must be >= 0");
}

RegressionParams fit_intensity_regression(std::span<const IntensityPair> pairs) {
  if (pairs.size() < 2) throw InvariantError("intensity regression needs at least 2 pairs");
  const double n = static_cast<double>(pairs.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : pairs) {
    mx += p.m;
    my += p.delta;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : pairs) {
    sxx += (p.m - mx) * (p.m - mx);
    sxy += (p.m - mx) * (p.delta - my);
  }
  if (!(sxx > 0.0)) throw InvariantError("intensity regression needs distinct m values");

  RegressionParams r;
  r.alpha = sxy / sxx;
  r.beta = my - r.alpha * mx;
  double ss = 0.0;
  for (const auto& p : pairs) {
    const double e = p.delta - (r.alpha * p.m + r.beta);
    ss += e * e;
  }
  r.sigma_eps = std::sqrt(ss / n);
  return r;
}

OffsetHistogram OffsetHistogram::uniform(std::size_t bins) {
  OffsetHistogram h;
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges.push_back(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(bins));
  h.probabilities.assign(bins, 1.0 / static_cast<double>(bins));
  return h;
}

OffsetHistogram OffsetHistogram::from_samples(std::span<const double> samples, std::size_t bins) {
  if (samples.empty()) throw InvariantError("offset histogram needs at least one sample");
  OffsetHistogram h = uniform(bins);
  std::vector<double> counts(bins, 0.0);
  for (double s : samples) {
    const double t = (std::clamp(s, -1.0, 1.0) + 1.0) / 2.0 * static_cast<double>(bins);
    counts[std::min(bins - 1, static_cast<std::size_t>(t))] += 1.0;
  }
  for (std::size_t i = 0; i < bins; ++i)
    h.probabilities[i] = counts[i] / static_cast<double>(samples.size());
  return h;
}

double OffsetHistogram::sample(Rng& rng) const {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t bin = probabilities.size() - 1;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    acc += probabilities[i];
    if (u < acc) {
      bin = i;
      break;
    }
  }
  // Trailing empty bins must never be chosen through round-off.
  while (bin > 0 && probabilities[bin] == 0.0) --bin;
  const double t = uniform01(rng);
  return edges[bin] + t * (edges[bin + 1] - edges[bin]);
}

void OffsetHistogram::validate() const {
  if (probabilities.empty() || edges.size() != probabilities.size() + 1)
    throw InvariantError("offset histogram needs bins + 1 edges");
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    if (!(edges[i] < edges[i + 1])) throw InvariantError("offset histogram edges must ascend");
  double sum = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw InvariantError("offset histogram probabilities must be non-negative");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw InvariantError("offset histogram must sum to 1");
}

void TumorStatsModel::validate() const {
  size_ratio_dist.validate();
  intensity_regression.validate();
  offset_z_hist.validate();
  if (!(neighborhood_radius_mm > 0.0) || !std::isfinite(neighborhood_radius_mm))
    throw InvariantError("neighborhood_radius_mm must be > 0");
}

TumorStatsModel fit_stats_model(std::span<const CaseStats> cases, double radius_mm,
                                TumorType tumor_type) {
  if (cases.size() < 3) throw InvariantError("stats model needs at least 3 cases");
  std::vector<double> ratios, offsets;
  std::vector<IntensityPair> pairs;
  for (const auto& c : cases) {
    ratios.push_back(c.size_ratio);
    offsets.push_back(c.offset_z);
    pairs.push_back({c.neighborhood_median, c.intensity_residual});
  }
  TumorStatsModel m;
  m.tumor_type = tumor_type;
  m.size_ratio_dist = fit_skew_normal(ratios);
  m.intensity_regression = fit_intensity_regression(pairs);
  m.offset_z_hist = OffsetHistogram::from_samples(offsets);
  m.neighborhood_radius_mm = radius_mm;
  m.n_cases = cases.size();
  m.validate();
  return m;
}

}  // namespace pancsynth
