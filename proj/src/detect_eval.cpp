#include "pancsynth/detect_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>

namespace pancsynth {
namespace {

std::vector<Index3> neighbour_offsets(Connectivity c) {
  std::vector<Index3> out;
  for (std::int64_t dz = -1; dz <= 1; ++dz)
    for (std::int64_t dy = -1; dy <= 1; ++dy)
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        const auto l1 = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (l1 == 0) continue;
        if (c == Connectivity::six && l1 != 1) continue;
        out.push_back({dx, dy, dz});
      }
  return out;
}

double sensitivity_of(std::span<const CaseEval> cases, double threshold, SensitivityUnit unit,
                      std::size_t denominator) {
  std::size_t hits = 0;
  for (const auto& c : cases) {
    const auto det = c.detected(threshold);
    if (unit == SensitivityUnit::lesion)
      hits += static_cast<std::size_t>(std::count(det.begin(), det.end(), true));
    else if (std::find(det.begin(), det.end(), true) != det.end())
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(denominator);
}

}  // namespace

std::vector<Instance> extract_instances(const Mask& mask, const Volume* score_map,
                                        Connectivity connectivity) {
  const auto& g = mask.geometry();
  if (score_map) require_same_lattice(g, score_map->geometry(), "score map vs mask");
  const auto offsets = neighbour_offsets(connectivity);

  std::vector<std::uint8_t> visited(mask.size(), 0);
  std::vector<Instance> out;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (mask[seed] <= 0 || visited[seed]) continue;
    Instance inst;
    inst.score = score_map ? -std::numeric_limits<double>::infinity() : 1.0;
    visited[seed] = 1;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      inst.voxels.push_back(i);
      const Index3 p = g.coords(i);
      for (const auto& o : offsets) {
        const Index3 q{p[0] + o[0], p[1] + o[1], p[2] + o[2]};
        if (!g.contains(q)) continue;
        const std::size_t j = g.index(q);
        if (mask[j] <= 0 || visited[j]) continue;
        visited[j] = 1;
        stack.push_back(j);
      }
    }
    std::sort(inst.voxels.begin(), inst.voxels.end());
    for (std::size_t i : inst.voxels) {
      const Index3 p = g.coords(i);
      for (int a = 0; a < 3; ++a) inst.centroid[a] += static_cast<double>(p[a]);
      if (score_map) inst.score = std::max(inst.score, static_cast<double>((*score_map)[i]));
    }
    if (!(inst.score >= 0.0 && inst.score <= 1.0))
      throw InvariantError("instance score outside [0, 1]");
    const double n = static_cast<double>(inst.voxels.size());
    for (auto& c : inst.centroid) c /= n;
    inst.volume_mm3 = n * g.voxel_volume();
    inst.equivalent_radius_mm = std::cbrt(3.0 * inst.volume_mm3 / (4.0 * std::numbers::pi));
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<MatchEdge> match_instances(std::span<const Instance> pred, std::span<const Instance> gt,
                                       const MatchOptions& opts) {
  std::unordered_map<std::size_t, std::size_t> owner;
  for (std::size_t g = 0; g < gt.size(); ++g)
    for (std::size_t v : gt[g].voxels) owner.emplace(v, g);

  std::vector<MatchEdge> candidates;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    std::unordered_map<std::size_t, std::size_t> overlap;
    for (std::size_t v : pred[p].voxels) {
      const auto it = owner.find(v);
      if (it != owner.end()) ++overlap[it->second];
    }
    for (const auto& [g, n] : overlap) {
      if (opts.min_iou > 0.0) {
        const double uni = static_cast<double>(pred[p].voxels.size() + gt[g].voxels.size() - n);
        if (static_cast<double>(n) / uni < opts.min_iou) continue;
      }
      candidates.push_back({p, g, n});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const MatchEdge& a, const MatchEdge& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gt < b.gt;
  });
  std::vector<bool> taken(pred.size(), false);
  std::vector<MatchEdge> edges;
  for (const auto& e : candidates) {
    if (taken[e.pred]) continue;
    taken[e.pred] = true;
    edges.push_back(e);
  }
  std::sort(edges.begin(), edges.end(),
            [](const MatchEdge& a, const MatchEdge& b) { return a.pred < b.pred; });
  return edges;
}

CaseEval CaseEval::build(std::vector<Instance> gt, std::vector<Instance> pred,
                         const MatchOptions& opts) {
  CaseEval c{std::move(gt), std::move(pred), {}};
  c.matches = match_instances(c.pred, c.gt, opts);
  return c;
}

std::size_t CaseEval::false_positives(double threshold) const {
  std::vector<bool> matched(pred.size(), false);
  for (const auto& e : matches) matched[e.pred] = true;
  std::size_t fp = 0;
  for (std::size_t p = 0; p < pred.size(); ++p)
    if (!matched[p] && pred[p].score >= threshold) ++fp;
  return fp;
}

std::vector<bool> CaseEval::detected(double threshold) const {
  std::vector<bool> out(gt.size(), false);
  for (const auto& e : matches)
    if (pred[e.pred].score >= threshold) out[e.gt] = true;
  return out;
}

FrocCurve froc(std::span<const CaseEval> cases, std::span<const double> fp_targets,
               SensitivityUnit unit) {
  if (cases.empty()) throw InvariantError("FROC needs at least one case");
  for (double t : fp_targets)
    if (!(t > 0.0)) throw InvariantError("FP targets must be > 0");

  FrocCurve curve;
  curve.n_cases = cases.size();
  std::size_t subjects_with_gt = 0;
  std::vector<double> thresholds;
  for (const auto& c : cases) {
    curve.n_gt += c.gt.size();
    if (!c.gt.empty()) ++subjects_with_gt;
    for (const auto& p : c.pred) thresholds.push_back(p.score);
  }
  if (curve.n_gt == 0) throw InvariantError("FROC needs at least one ground-truth lesion");
  const std::size_t denominator = unit == SensitivityUnit::lesion ? curve.n_gt : subjects_with_gt;

  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.insert(thresholds.begin(), std::numeric_limits<double>::infinity());

  const double n = static_cast<double>(cases.size());
  for (double t : thresholds) {
    FrocPoint pt;
    pt.threshold = t;
    for (const auto& c : cases) pt.false_positives += c.false_positives(t);
    pt.fp_per_subject = static_cast<double>(pt.false_positives) / n;
    pt.sensitivity = sensitivity_of(cases, t, unit, denominator);
    curve.points.push_back(pt);
  }
  for (double target : fp_targets) {
    FrocTarget ft;
    ft.fp_target = target;
    for (const auto& pt : curve.points) {
      if (pt.fp_per_subject > target) break;
      ft.sensitivity = pt.sensitivity;
      ft.threshold = pt.threshold;
      ft.fp_per_subject = pt.fp_per_subject;
    }
    curve.targets.push_back(ft);
  }
  return curve;
}

double dice(const Mask& pred, const Mask& gt) {
  require_same_lattice(pred.geometry(), gt.geometry(), "prediction vs ground truth");
  std::size_t np = 0, ng = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] > 0, g = gt[i] > 0;
    np += p;
    ng += g;
    both += p && g;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

std::vector<RadiusBin> stratified_sensitivity(std::span<const CaseEval> cases,
                                              std::span<const double> radius_edges_mm,
                                              double fp_target) {
  if (radius_edges_mm.size() < 2) throw InvariantError("radius bins need at least two edges");
  for (std::size_t i = 0; i + 1 < radius_edges_mm.size(); ++i)
    if (!(radius_edges_mm[i] < radius_edges_mm[i + 1]))
      throw InvariantError("radius bin edges must ascend");

  const double targets[] = {fp_target};
  const double threshold = froc(cases, targets).targets.front().threshold;

  std::vector<RadiusBin> bins;
  for (std::size_t i = 0; i + 1 < radius_edges_mm.size(); ++i)
    bins.push_back({radius_edges_mm[i], radius_edges_mm[i + 1], 0, 0, std::nullopt});
  for (const auto& c : cases) {
    const auto det = c.detected(threshold);
    for (std::size_t g = 0; g < c.gt.size(); ++g) {
      const double r = c.gt[g].equivalent_radius_mm;
      for (auto& b : bins) {
        if (r >= b.lo_mm && r < b.hi_mm) {
          ++b.n_gt;
          if (det[g]) ++b.detected;
          break;
        }
      }
    }
  }
  for (auto& b : bins)
    if (b.n_gt > 0) b.sensitivity = static_cast<double>(b.detected) / static_cast<double>(b.n_gt);
  return bins;
}

RocCurve roc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw InvariantError("labels and scores differ in length");
  std::size_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvariantError("ROC labels must be 0 or 1");
    (l == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw InvariantError("ROC needs both classes");
  for (double s : scores)
    if (!std::isfinite(s)) throw InvariantError("ROC scores must be finite");

  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve c;
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  // Twice the trapezoid area in units of 1/(pos*neg); integer so the AUC is exact.
  std::uint64_t area2 = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    const std::size_t tp0 = tp, fp0 = fp;
    for (; k < order.size() && scores[order[k]] == s; ++k) (labels[order[k]] == 1 ? tp : fp)++;
    area2 += static_cast<std::uint64_t>(fp - fp0) * (tp + tp0);
    c.points.push_back({s, static_cast<double>(fp) / static_cast<double>(neg),
                        static_cast<double>(tp) / static_cast<double>(pos)});
  }
  c.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return c;
}

}  // namespace pancsynth
