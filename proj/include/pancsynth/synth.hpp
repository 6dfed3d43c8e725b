#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "pancsynth/cohort_stats.hpp"
#include "pancsynth/grid.hpp"
#include "pancsynth/rng.hpp"

namespace pancsynth {

/// Size-ratio interval (previous bound, upper_bound] chosen with probability
/// proportional to weight. The first interval starts at 0.
struct Stratum {
  double upper_bound = std::numeric_limits<double>::infinity();
  double weight = 1.0;
  bool operator==(const Stratum&) const = default;
};

struct SynthesisConfig {
  std::vector<Stratum> strata{{0.01, 0.3},
                              {0.05, 0.3},
                              {0.25, 0.3},
                              {std::numeric_limits<double>::infinity(), 0.1}};
  std::array<double, 2> axis_ratio_range{0.8, 1.25};
  double elastic_sigma_mm = 4.0;
  double elastic_magnitude_mm = 2.0;
  double texture_sigma_hu = 8.0;
  double blur_sigma_mm = 1.0;  // 0 disables blending (hard edge)
  double core_threshold = 0.5;
  int tumors_per_volume = 1;
  std::uint64_t seed = 0;
  // Batch mode: synthetic images produced from each healthy case.
  int variants_per_case = 2;
  // Batch mode: skip the non-overlap rejection between tumors.
  bool allow_overlap = false;

  /// Single stratum (0, inf) with weight 1: the raw fitted distribution.
  static SynthesisConfig unstratified();
  void validate() const;
  bool operator==(const SynthesisConfig&) const = default;
};

/// Binary mask on a small grid local to one tumor. `center` is the voxel of
/// the local grid that is placed on the tumor position in the volume.
struct LocalMask {
  std::array<std::size_t, 3> dims{1, 1, 1};
  Index3 center{0, 0, 0};
  std::vector<std::uint8_t> bits;

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims[0] * (y + dims[1] * z);
  }
  std::size_t count() const;
  bool contains(const Index3& local) const;
  bool test(const Index3& local) const { return contains(local) && bits[index(local)] != 0; }
  std::size_t index(const Index3& p) const {
    return index(static_cast<std::size_t>(p[0]), static_cast<std::size_t>(p[1]),
                 static_cast<std::size_t>(p[2]));
  }
  bool operator==(const LocalMask&) const = default;
};

struct SizeDraw {
  double ratio = 0.0;
  std::size_t stratum = 0;
};

/// Picks a stratum by weight, then rejection-samples the model's size-ratio
/// distribution inside it. Throws InvariantError after 10,000 rejections.
SizeDraw sample_size_ratio(const TumorStatsModel& model, const SynthesisConfig& cfg, Rng& rng);

inline constexpr int kMaxSizeRejections = 10000;

/// Ellipsoid semi-axes (mm, along x/y/z) of volume ratio * pancreas_volume_mm3,
/// with per-axis anisotropy drawn from cfg.axis_ratio_range. a*b*c equals
/// r0^3 for the equal-volume sphere radius r0.
std::array<double, 3> derive_semi_axes(double ratio, double pancreas_volume_mm3,
                                       const SynthesisConfig& cfg, Rng& rng);

/// Voxels whose centers satisfy the ellipsoid inequality around the grid
/// center, on a tight grid with a 1-voxel margin. The center voxel is always
/// included, so the result has at least one voxel.
LocalMask rasterize_ellipsoid(const std::array<double, 3>& semi_axes_mm,
                              const std::array<double, 3>& spacing);

/// Warps `mask` by a smoothed random displacement field whose largest
/// magnitude is cfg.elastic_magnitude_mm (nearest-neighbour backward mapping).
/// The grid grows to hold the displaced shape; magnitude 0 returns the input
/// unchanged.
LocalMask elastic_deform(const LocalMask& mask, const std::array<double, 3>& spacing,
                         const SynthesisConfig& cfg, Rng& rng);

/// Uniform sampling of tumor centers inside the pancreas, with the slice
/// chosen through the model's offset-z histogram.
class PancreasSampler {
 public:
  explicit PancreasSampler(const Mask& pancreas);
  Index3 sample(const OffsetHistogram& offsets, Rng& rng) const;
  std::size_t voxel_count() const { return all_.size(); }

 private:
  Geometry geometry_;
  ZExtent extent_;
  std::vector<std::vector<std::size_t>> by_slice_;
  std::vector<std::size_t> all_;
};

/// Convenience wrapper over PancreasSampler. Throws on an empty pancreas.
Index3 sample_position(const Mask& pancreas, const TumorStatsModel& model, Rng& rng);

struct NeighborhoodOptions {
  std::size_t min_voxels = 10;
  int max_expansions = 3;
  double growth = 1.5;
};

struct Neighborhood {
  double median = 0.0;
  double radius_mm = 0.0;  // radius actually used after expansion
  std::size_t voxels = 0;
};

/// Lower median HU of pancreas voxels within radius_mm of `center` that are
/// not covered by `exclude` (placed with its center on `center`). The radius
/// grows by opts.growth up to opts.max_expansions times while fewer than
/// opts.min_voxels qualify; InvariantError if still too few.
Neighborhood neighborhood_median(const Volume& v, const Mask& pancreas, const Index3& center,
                                 double radius_mm, const LocalMask* exclude,
                                 const NeighborhoodOptions& opts = {});

struct DeltaDraw {
  double delta_i = 0.0;
  double epsilon = 0.0;
};

/// delta_i = alpha * m + beta + epsilon, epsilon ~ N(0, sigma_eps^2).
DeltaDraw compute_delta_i(double m, const RegressionParams& reg, Rng& rng);

/// Per-voxel N(m - delta_i, texture_sigma_hu^2) over the tumor voxels of
/// `tumor`; NaN elsewhere. Draw order is the local grid's memory order.
std::vector<double> generate_texture(const LocalMask& tumor, double m, double delta_i,
                                     const SynthesisConfig& cfg, Rng& rng);

/// Blur weights of one tumor on its own padded grid.
struct BlendWeights {
  std::array<std::size_t, 3> dims{1, 1, 1};
  Index3 center{0, 0, 0};
  std::vector<double> weight;        // in [0, 1], max 1
  std::vector<double> texture;       // tumor texture extended to weight > 0
};

/// Gaussian-blurred tumor indicator (truncated at 3 sigma, renormalized to a
/// maximum of 1) plus the texture extended to the blurred support by the
/// value of the nearest tumor voxel.
BlendWeights blend_weights(const LocalMask& tumor, const std::vector<double>& texture,
                           const std::array<double, 3>& spacing, double blur_sigma_mm);

struct BlendOutput {
  Volume volume;
  Mask tumor_mask;
};

/// out = (1 - w) * in + w * texture, tumor mask = {w >= cfg.core_threshold}.
/// The tumor is clipped at the volume border; InvariantError when nothing of
/// it lies inside the volume.
BlendOutput blend(const Volume& v, const Mask& pancreas, const LocalMask& tumor,
                  const Index3& center, const std::vector<double>& texture,
                  const SynthesisConfig& cfg);

struct TumorProvenance {
  std::int16_t label = 0;
  std::size_t stratum = 0;
  double size_ratio = 0.0;
  std::array<double, 3> semi_axes_mm{};
  std::size_t raster_voxels = 0;  // before elastic deformation
  bool subvoxel = false;          // ellipsoid collapsed to its center voxel
  std::size_t deformed_voxels = 0;
  Index3 center{};
  int position_attempts = 0;
  double neighborhood_median = 0.0;
  double neighborhood_radius_mm = 0.0;
  std::size_t neighborhood_voxels = 0;
  double delta_i = 0.0;
  double epsilon = 0.0;
  double tumor_mean_hu = 0.0;  // m - delta_i
  std::size_t mask_voxels = 0;
};

struct SynthesisProvenance {
  std::uint64_t seed = 0;
  int requested_tumors = 0;
  int placed_tumors = 0;
  bool count_reduced = false;  // overlap rejection gave up on some tumors
  std::vector<TumorProvenance> tumors;
};

struct SynthesisResult {
  Volume volume_out;
  Mask tumor_mask;  // labels 1..placed_tumors
  SynthesisProvenance provenance;
};

inline constexpr int kMaxPositionAttempts = 50;

/// Full shape -> position -> texture -> blend pipeline, repeated
/// cfg.tumors_per_volume times. Bit-deterministic for a given seed.
SynthesisResult synthesize_tumor(const Volume& v, const Mask& pancreas,
                                 const TumorStatsModel& model, const SynthesisConfig& cfg,
                                 std::uint64_t seed);

/// Equal-volume sphere radius.
double equivalent_radius(double volume_mm3);

}  // namespace pancsynth
