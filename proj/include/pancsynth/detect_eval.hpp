#pragma once

#include <array>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pancsynth/grid.hpp"

namespace pancsynth {

enum class Connectivity { six = 6, twenty_six = 26 };

/// One connected component of a label mask.
struct Instance {
  std::vector<std::size_t> voxels;  // ascending linear indices
  double score = 1.0;               // in [0, 1]
  double volume_mm3 = 0.0;
  double equivalent_radius_mm = 0.0;
  std::array<double, 3> centroid{};  // voxel coordinates
};

/// Connected components of positive labels. An instance's score is the
/// maximum of `score_map` over its voxels, or 1 without a score map.
std::vector<Instance> extract_instances(const Mask& mask, const Volume* score_map = nullptr,
                                        Connectivity connectivity = Connectivity::twenty_six);

struct MatchEdge {
  std::size_t pred = 0;
  std::size_t gt = 0;
  std::size_t overlap = 0;  // shared voxels
};

struct MatchOptions {
  /// 0 means any shared voxel is a hit; otherwise IoU must reach this value.
  double min_iou = 0.0;
};

/// Greedy assignment by descending overlap: each prediction is attached to
/// at most one ground-truth instance. Predictions without an edge are false
/// positives.
std::vector<MatchEdge> match_instances(std::span<const Instance> pred, std::span<const Instance> gt,
                                       const MatchOptions& opts = {});

struct CaseEval {
  std::vector<Instance> gt;
  std::vector<Instance> pred;
  std::vector<MatchEdge> matches;

  static CaseEval build(std::vector<Instance> gt, std::vector<Instance> pred,
                        const MatchOptions& opts = {});
  std::size_t false_positives(double threshold) const;
  /// Per ground-truth instance: hit by a matched prediction with score >= threshold.
  std::vector<bool> detected(double threshold) const;
};

/// Whether sensitivity counts lesions or subjects (a subject counts as
/// detected when any of its lesions is detected).
enum class SensitivityUnit { lesion, subject };

struct FrocPoint {
  double threshold = 0.0;  // predictions with score >= threshold are active
  std::size_t false_positives = 0;
  double fp_per_subject = 0.0;
  double sensitivity = 0.0;
};

struct FrocTarget {
  double fp_target = 0.0;
  double sensitivity = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
  double fp_per_subject = 0.0;
};

struct FrocCurve {
  std::size_t n_cases = 0;
  std::size_t n_gt = 0;
  /// Descending thresholds starting at +inf (nothing active); fp_per_subject
  /// and sensitivity are non-decreasing along the vector.
  std::vector<FrocPoint> points;
  std::vector<FrocTarget> targets;
};

/// Threshold sweep over every distinct prediction score. Each target reports
/// the operating point with the largest fp_per_subject <= target (step
/// function, no interpolation). Throws when there are no ground-truth lesions.
FrocCurve froc(std::span<const CaseEval> cases, std::span<const double> fp_targets,
               SensitivityUnit unit = SensitivityUnit::lesion);

/// 2|P n G| / (|P| + |G|) over positive labels; 1 when both are empty.
double dice(const Mask& pred, const Mask& gt);

struct RadiusBin {
  double lo_mm = 0.0;
  double hi_mm = 0.0;  // exclusive
  std::size_t n_gt = 0;
  std::size_t detected = 0;
  std::optional<double> sensitivity;  // empty for a bin without lesions
};

/// Lesion sensitivity per equivalent-radius bin [edges[i], edges[i+1]) at the
/// global threshold that froc selects for fp_target.
std::vector<RadiusBin> stratified_sensitivity(std::span<const CaseEval> cases,
                                              std::span<const double> radius_edges_mm,
                                              double fp_target);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1)
  double auc = 0.0;
};

/// Label 1 is the positive class. Tied scores form one diagonal step, so the
/// trapezoid AUC equals the Mann-Whitney statistic with ties counted as 1/2.
RocCurve roc(std::span<const int> labels, std::span<const double> scores);

}  // namespace pancsynth
