#include "pancsynth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <string>

#include "pancsynth/filter.hpp"
#include "pancsynth/skew_normal.hpp"

namespace pancsynth {
namespace {

std::size_t prod(const std::array<std::size_t, 3>& d) { return d[0] * d[1] * d[2]; }

Index3 local_coords(const std::array<std::size_t, 3>& dims, std::size_t idx) {
  return {static_cast<std::int64_t>(idx % dims[0]),
          static_cast<std::int64_t>((idx / dims[0]) % dims[1]),
          static_cast<std::int64_t>(idx / (dims[0] * dims[1]))};
}

std::size_t local_index(const std::array<std::size_t, 3>& dims, const Index3& p) {
  return static_cast<std::size_t>(p[0]) +
         dims[0] * (static_cast<std::size_t>(p[1]) + dims[1] * static_cast<std::size_t>(p[2]));
}

Index3 to_global(const Index3& local, const Index3& local_center, const Index3& center) {
  return {center[0] + local[0] - local_center[0], center[1] + local[1] - local_center[1],
          center[2] + local[2] - local_center[2]};
}

// Texture value of the nearest tumor voxel for every cell (multi-source BFS
// over the 26-neighbourhood; ties resolved by visit order).
void extend_texture(std::vector<double>& tex, const std::vector<std::uint8_t>& tumor,
                    const std::array<std::size_t, 3>& dims) {
  std::vector<std::uint8_t> seen(tumor);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < tumor.size(); ++i)
    if (tumor[i]) queue.push_back(i);
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const Index3 p = local_coords(dims, i);
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const Index3 q{p[0] + dx, p[1] + dy, p[2] + dz};
          if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= static_cast<std::int64_t>(dims[0]) ||
              q[1] >= static_cast<std::int64_t>(dims[1]) ||
              q[2] >= static_cast<std::int64_t>(dims[2]))
            continue;
          const std::size_t j = local_index(dims, q);
          if (seen[j]) continue;
          seen[j] = 1;
          tex[j] = tex[i];
          queue.push_back(j);
        }
  }
}

// True when the tumor core at `center` would touch an already labelled voxel.
bool core_overlaps(const BlendWeights& w, const Index3& center, const Mask& labels,
                   double threshold) {
  const auto& g = labels.geometry();
  for (std::size_t i = 0; i < w.weight.size(); ++i) {
    if (w.weight[i] < threshold) continue;
    const Index3 p = to_global(local_coords(w.dims, i), w.center, center);
    if (g.contains(p) && labels.at(p) > 0) return true;
  }
  return false;
}

// Blends in place on `out`; returns the number of labelled voxels written.
std::size_t apply_blend(const BlendWeights& w, const Index3& center, double threshold,
                        std::int16_t label, Volume& out, Mask& labels) {
  const auto& g = out.geometry();
  std::size_t in_bounds = 0, labelled = 0;
  for (std::size_t i = 0; i < w.weight.size(); ++i) {
    const double wi = w.weight[i];
    if (wi <= 0.0) continue;
    const Index3 p = to_global(local_coords(w.dims, i), w.center, center);
    if (!g.contains(p)) continue;
    ++in_bounds;
    const std::size_t gi = g.index(p);
    out[gi] = static_cast<float>((1.0 - wi) * static_cast<double>(out[gi]) + wi * w.texture[i]);
    if (wi >= threshold) {
      labels[gi] = label;
      ++labelled;
    }
  }
  if (in_bounds == 0) throw InvariantError("tumor lies entirely outside the volume");
  return labelled;
}

}  // namespace

SynthesisConfig SynthesisConfig::unstratified() {
  SynthesisConfig c;
  c.strata = {{std::numeric_limits<double>::infinity(), 1.0}};
  return c;
}

void SynthesisConfig::validate() const {
  if (strata.empty()) throw InvariantError("at least one size stratum is required");
  double total = 0.0, prev = 0.0;
  for (const auto& s : strata) {
    if (!(s.weight >= 0.0) || !std::isfinite(s.weight))
      throw InvariantError("stratum weights must be finite and >= 0");
    if (!(s.upper_bound > prev)) throw InvariantError("stratum bounds must be positive and ascending");
    prev = s.upper_bound;
    total += s.weight;
  }
  if (!(total > 0.0)) throw InvariantError("stratum weights must sum to > 0");
  if (!(axis_ratio_range[0] > 0.0 && axis_ratio_range[0] <= 1.0 && axis_ratio_range[1] >= 1.0 &&
        std::isfinite(axis_ratio_range[1])))
    throw InvariantError("axis_ratio_range must satisfy 0 < lo <= 1 <= hi");
  if (!(elastic_sigma_mm > 0.0)) throw InvariantError("elastic_sigma_mm must be > 0");
  if (!(elastic_magnitude_mm >= 0.0)) throw InvariantError("elastic_magnitude_mm must be >= 0");
  if (!(texture_sigma_hu >= 0.0)) throw InvariantError("texture_sigma_hu must be >= 0");
  if (!(blur_sigma_mm >= 0.0)) throw InvariantError("blur_sigma_mm must be >= 0");
  if (!(core_threshold > 0.0 && core_threshold <= 1.0))
    throw InvariantError("core_threshold must be in (0, 1]");
  if (tumors_per_volume < 1) throw InvariantError("tumors_per_volume must be >= 1");
  if (variants_per_case < 1) throw InvariantError("variants_per_case must be >= 1");
}

std::size_t LocalMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

bool LocalMask::contains(const Index3& p) const {
  for (int a = 0; a < 3; ++a)
    if (p[a] < 0 || p[a] >= static_cast<std::int64_t>(dims[a])) return false;
  return true;
}

SizeDraw sample_size_ratio(const TumorStatsModel& model, const SynthesisConfig& cfg, Rng& rng) {
  double total = 0.0;
  for (const auto& s : cfg.strata) total += s.weight;
  const double u = uniform01(rng) * total;
  std::size_t k = 0;
  double acc = 0.0;
  for (; k + 1 < cfg.strata.size(); ++k) {
    acc += cfg.strata[k].weight;
    if (u < acc && cfg.strata[k].weight > 0.0) break;
  }
  while (cfg.strata[k].weight == 0.0) --k;  // round-off landed on a trailing empty stratum

  const double lo = k == 0 ? 0.0 : cfg.strata[k - 1].upper_bound;
  const double hi = cfg.strata[k].upper_bound;
  const double cap = cfg.strata.back().upper_bound;
  for (int i = 0; i < kMaxSizeRejections; ++i) {
    const double x = sample_skew_normal(model.size_ratio_dist, rng);
    if (x > lo && x <= hi) return {std::min(x, cap), k};
  }
  throw InvariantError("size stratum " + std::to_string(k) + " (" + std::to_string(lo) + ", " +
                       std::to_string(hi) +
                       "] has no mass under the size-ratio distribution; check strata vs model");
}

std::array<double, 3> derive_semi_axes(double ratio, double pancreas_volume_mm3,
                                       const SynthesisConfig& cfg, Rng& rng) {
  if (!(ratio > 0.0)) throw InvariantError("size ratio must be > 0");
  const double target = ratio * pancreas_volume_mm3;
  const double r0 = std::cbrt(3.0 * target / (4.0 * std::numbers::pi));
  std::array<double, 3> m{};
  for (auto& x : m)
    x = cfg.axis_ratio_range[0] + uniform01(rng) * (cfg.axis_ratio_range[1] - cfg.axis_ratio_range[0]);
  const double k = std::cbrt(m[0] * m[1] * m[2]);
  return {r0 * m[0] / k, r0 * m[1] / k, r0 * m[2] / k};
}

LocalMask rasterize_ellipsoid(const std::array<double, 3>& semi_axes_mm,
                              const std::array<double, 3>& spacing) {
  LocalMask out;
  for (int a = 0; a < 3; ++a) {
    if (!(semi_axes_mm[a] > 0.0)) throw InvariantError("semi-axes must be > 0");
    const auto half = static_cast<std::int64_t>(std::ceil(semi_axes_mm[a] / spacing[a]));
    out.dims[a] = static_cast<std::size_t>(2 * half + 3);
    out.center[a] = half + 1;
  }
  out.bits.assign(prod(out.dims), 0);
  for (std::size_t z = 0; z < out.dims[2]; ++z)
    for (std::size_t y = 0; y < out.dims[1]; ++y)
      for (std::size_t x = 0; x < out.dims[0]; ++x) {
        const std::array<std::size_t, 3> p{x, y, z};
        double s = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double d = (static_cast<double>(p[a]) - static_cast<double>(out.center[a])) *
                           spacing[a] / semi_axes_mm[a];
          s += d * d;
        }
        if (s <= 1.0) out.bits[out.index(x, y, z)] = 1;
      }
  return out;
}

LocalMask elastic_deform(const LocalMask& mask, const std::array<double, 3>& spacing,
                         const SynthesisConfig& cfg, Rng& rng) {
  if (cfg.elastic_magnitude_mm == 0.0) return mask;

  std::array<std::int64_t, 3> pad{};
  LocalMask out;
  for (int a = 0; a < 3; ++a) {
    pad[a] = static_cast<std::int64_t>(std::ceil(cfg.elastic_magnitude_mm / spacing[a])) + 1;
    out.dims[a] = mask.dims[a] + 2 * static_cast<std::size_t>(pad[a]);
    out.center[a] = mask.center[a] + pad[a];
  }
  const std::size_t n = prod(out.dims);

  std::array<std::vector<double>, 3> field;
  for (auto& f : field) {
    f.resize(n);
    for (auto& x : f) x = standard_normal(rng);
    gaussian_blur_3d(f, out.dims, spacing, cfg.elastic_sigma_mm, EdgeMode::nearest);
  }
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    peak = std::max(peak, std::sqrt(field[0][i] * field[0][i] + field[1][i] * field[1][i] +
                                    field[2][i] * field[2][i]));
  if (!(peak > 0.0)) return mask;
  const double scale = cfg.elastic_magnitude_mm / peak;

  out.bits.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Index3 p = local_coords(out.dims, i);
    Index3 src{};
    for (int a = 0; a < 3; ++a)
      src[a] = static_cast<std::int64_t>(std::lround(static_cast<double>(p[a]) +
                                                     field[a][i] * scale / spacing[a])) -
               pad[a];
    if (mask.test(src)) out.bits[i] = 1;
  }
  out.bits[out.index(out.center)] = 1;
  return out;
}

PancreasSampler::PancreasSampler(const Mask& pancreas) : geometry_(pancreas.geometry()) {
  extent_ = z_extent(pancreas);  // throws on an empty mask
  by_slice_.resize(static_cast<std::size_t>(extent_.slices()));
  for (std::size_t i = 0; i < pancreas.size(); ++i) {
    if (pancreas[i] <= 0) continue;
    const auto z = geometry_.coords(i)[2];
    by_slice_[static_cast<std::size_t>(z - extent_.zmin)].push_back(i);
    all_.push_back(i);
  }
}

Index3 PancreasSampler::sample(const OffsetHistogram& offsets, Rng& rng) const {
  const double offset = offsets.sample(rng);
  const auto& slab = by_slice_[static_cast<std::size_t>(extent_.slice_at(offset) - extent_.zmin)];
  const auto& pool = slab.empty() ? all_ : slab;
  const auto k = std::min(pool.size() - 1,
                          static_cast<std::size_t>(uniform01(rng) * static_cast<double>(pool.size())));
  return geometry_.coords(pool[k]);
}

Index3 sample_position(const Mask& pancreas, const TumorStatsModel& model, Rng& rng) {
  return PancreasSampler(pancreas).sample(model.offset_z_hist, rng);
}

Neighborhood neighborhood_median(const Volume& v, const Mask& pancreas, const Index3& center,
                                 double radius_mm, const LocalMask* exclude,
                                 const NeighborhoodOptions& opts) {
  require_same_lattice(v.geometry(), pancreas.geometry(), "pancreas mask vs volume");
  if (!(radius_mm > 0.0)) throw InvariantError("neighborhood radius must be > 0");
  const auto& g = v.geometry();
  double r = radius_mm;
  std::vector<float> values;
  for (int round = 0; round <= opts.max_expansions; ++round) {
    if (round > 0) r *= opts.growth;
    values.clear();
    std::array<std::int64_t, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      const auto reach = static_cast<std::int64_t>(std::floor(r / g.spacing[a]));
      lo[a] = std::max<std::int64_t>(0, center[a] - reach);
      hi[a] = std::min<std::int64_t>(static_cast<std::int64_t>(g.dims[a]) - 1, center[a] + reach);
    }
    for (auto z = lo[2]; z <= hi[2]; ++z)
      for (auto y = lo[1]; y <= hi[1]; ++y)
        for (auto x = lo[0]; x <= hi[0]; ++x) {
          const Index3 p{x, y, z};
          const std::size_t i = g.index(p);
          if (pancreas[i] <= 0) continue;
          double d2 = 0.0;
          for (int a = 0; a < 3; ++a) {
            const double d = static_cast<double>(p[a] - center[a]) * g.spacing[a];
            d2 += d * d;
          }
          if (d2 > r * r) continue;
          if (exclude) {
            const Index3 q{p[0] - center[0] + exclude->center[0],
                           p[1] - center[1] + exclude->center[1],
                           p[2] - center[2] + exclude->center[2]};
            if (exclude->test(q)) continue;
          }
          values.push_back(v[i]);
        }
    if (values.size() >= opts.min_voxels) {
      const std::size_t count = values.size();
      return {lower_median(std::move(values)), r, count};
    }
  }
  throw InvariantError("fewer than " + std::to_string(opts.min_voxels) +
                       " pancreas voxels around the tumor even after expanding the radius to " +
                       std::to_string(r) + " mm");
}

DeltaDraw compute_delta_i(double m, const RegressionParams& reg, Rng& rng) {
  const double eps = reg.sigma_eps * standard_normal(rng);
  return {reg.alpha * m + reg.beta + eps, eps};
}

std::vector<double> generate_texture(const LocalMask& tumor, double m, double delta_i,
                                     const SynthesisConfig& cfg, Rng& rng) {
  if (tumor.count() == 0) throw InvariantError("tumor mask is empty");
  const double mu = m - delta_i;
  std::vector<double> tex(tumor.bits.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < tex.size(); ++i)
    if (tumor.bits[i]) tex[i] = mu + cfg.texture_sigma_hu * standard_normal(rng);
  return tex;
}

BlendWeights blend_weights(const LocalMask& tumor, const std::vector<double>& texture,
                           const std::array<double, 3>& spacing, double blur_sigma_mm) {
  if (texture.size() != tumor.bits.size())
    throw InvariantError("texture does not match the tumor grid");
  BlendWeights w;
  std::array<std::int64_t, 3> pad{};
  for (int a = 0; a < 3; ++a) {
    pad[a] = blur_sigma_mm > 0.0
                 ? static_cast<std::int64_t>(std::ceil(3.0 * blur_sigma_mm / spacing[a]))
                 : 0;
    w.dims[a] = tumor.dims[a] + 2 * static_cast<std::size_t>(pad[a]);
    w.center[a] = tumor.center[a] + pad[a];
  }
  const std::size_t n = prod(w.dims);
  w.weight.assign(n, 0.0);
  w.texture.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::uint8_t> inside(n, 0);
  for (std::size_t i = 0; i < tumor.bits.size(); ++i) {
    if (!tumor.bits[i]) continue;
    const Index3 p = local_coords(tumor.dims, i);
    const std::size_t j = local_index(w.dims, {p[0] + pad[0], p[1] + pad[1], p[2] + pad[2]});
    w.weight[j] = 1.0;
    w.texture[j] = texture[i];
    inside[j] = 1;
  }
  if (blur_sigma_mm > 0.0) {
    gaussian_blur_3d(w.weight, w.dims, spacing, blur_sigma_mm, EdgeMode::zero);
    const double peak = *std::max_element(w.weight.begin(), w.weight.end());
    if (!(peak > 0.0)) throw InvariantError("tumor mask is empty");
    for (auto& x : w.weight) x = std::clamp(x / peak, 0.0, 1.0);
    extend_texture(w.texture, inside, w.dims);
  }
  return w;
}

BlendOutput blend(const Volume& v, const Mask& pancreas, const LocalMask& tumor,
                  const Index3& center, const std::vector<double>& texture,
                  const SynthesisConfig& cfg) {
  require_same_lattice(v.geometry(), pancreas.geometry(), "pancreas mask vs volume");
  const auto w = blend_weights(tumor, texture, v.geometry().spacing, cfg.blur_sigma_mm);
  BlendOutput out{v, Mask(v.geometry(), std::int16_t{0})};
  apply_blend(w, center, cfg.core_threshold, 1, out.volume, out.tumor_mask);
  return out;
}

double equivalent_radius(double volume_mm3) {
  return std::cbrt(3.0 * volume_mm3 / (4.0 * std::numbers::pi));
}

SynthesisResult synthesize_tumor(const Volume& v, const Mask& pancreas,
                                 const TumorStatsModel& model, const SynthesisConfig& cfg,
                                 std::uint64_t seed) {
  cfg.validate();
  model.validate();
  require_same_lattice(v.geometry(), pancreas.geometry(), "pancreas mask vs volume");
  const auto& g = v.geometry();
  const PancreasSampler sampler(pancreas);
  const double pancreas_volume = static_cast<double>(sampler.voxel_count()) * g.voxel_volume();

  Rng rng(seed);
  SynthesisResult result{v, Mask(g, std::int16_t{0}), {}};
  auto& prov = result.provenance;
  prov.seed = seed;
  prov.requested_tumors = cfg.tumors_per_volume;

  for (int t = 0; t < cfg.tumors_per_volume; ++t) {
    TumorProvenance tp;
    tp.label = static_cast<std::int16_t>(t + 1);

    const auto size = sample_size_ratio(model, cfg, rng);
    tp.stratum = size.stratum;
    tp.size_ratio = size.ratio;
    tp.semi_axes_mm = derive_semi_axes(size.ratio, pancreas_volume, cfg, rng);
    const auto ellipsoid = rasterize_ellipsoid(tp.semi_axes_mm, g.spacing);
    tp.raster_voxels = ellipsoid.count();
    tp.subvoxel = tp.raster_voxels == 1;
    const auto shape = elastic_deform(ellipsoid, g.spacing, cfg, rng);
    tp.deformed_voxels = shape.count();

    // Weights do not depend on texture values, so the overlap test can use a
    // placeholder texture.
    const std::vector<double> placeholder(shape.bits.size(), 0.0);
    const auto footprint = blend_weights(shape, placeholder, g.spacing, cfg.blur_sigma_mm);

    bool placed = false;
    for (int attempt = 1; attempt <= kMaxPositionAttempts; ++attempt) {
      tp.center = sampler.sample(model.offset_z_hist, rng);
      tp.position_attempts = attempt;
      if (cfg.allow_overlap ||
          !core_overlaps(footprint, tp.center, result.tumor_mask, cfg.core_threshold)) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      prov.count_reduced = true;
      break;
    }

    const auto nb = neighborhood_median(v, pancreas, tp.center, model.neighborhood_radius_mm, &shape);
    tp.neighborhood_median = nb.median;
    tp.neighborhood_radius_mm = nb.radius_mm;
    tp.neighborhood_voxels = nb.voxels;
    const auto d = compute_delta_i(nb.median, model.intensity_regression, rng);
    tp.delta_i = d.delta_i;
    tp.epsilon = d.epsilon;
    tp.tumor_mean_hu = nb.median - d.delta_i;

    const auto texture = generate_texture(shape, nb.median, d.delta_i, cfg, rng);
    const auto weights = blend_weights(shape, texture, g.spacing, cfg.blur_sigma_mm);
    tp.mask_voxels = apply_blend(weights, tp.center, cfg.core_threshold, tp.label,
                                 result.volume_out, result.tumor_mask);
    if (tp.mask_voxels == 0) throw InvariantError("synthesized tumor core is empty");
    prov.tumors.push_back(tp);
    ++prov.placed_tumors;
  }
  if (prov.placed_tumors == 0) throw InvariantError("no tumor could be placed");
  return result;
}

}  // namespace pancsynth
