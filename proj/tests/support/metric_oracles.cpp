#include "metric_oracles.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace testsupport {

using pancsynth::Mask;
using pancsynth::Volume;

namespace {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

std::size_t overlap(const OComponent& a, const OComponent& b) {
  std::vector<std::size_t> both;
  std::set_intersection(a.voxels.begin(), a.voxels.end(), b.voxels.begin(), b.voxels.end(),
                        std::back_inserter(both));
  return both.size();
}

}  // namespace

std::vector<OComponent> oracle_components(const Mask& mask, const Volume* scores, int connectivity) {
  const auto& g = mask.geometry();
  std::vector<std::size_t> parent(mask.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] > 0) on.push_back(i);
  for (std::size_t a = 0; a < on.size(); ++a) {
    const auto p = g.coords(on[a]);
    for (std::size_t b = a + 1; b < on.size(); ++b) {
      const auto q = g.coords(on[b]);
      const auto dx = std::abs(p[0] - q[0]), dy = std::abs(p[1] - q[1]), dz = std::abs(p[2] - q[2]);
      if (dz > 1) break;  // later voxels only move further in z
      if (dx > 1 || dy > 1) continue;
      if (connectivity == 6 && dx + dy + dz != 1) continue;
      parent[find_root(parent, on[b])] = find_root(parent, on[a]);
    }
  }
  std::map<std::size_t, OComponent> by_root;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] > 0) by_root[find_root(parent, i)].voxels.push_back(i);
  std::vector<OComponent> out;
  for (auto& [_, c] : by_root) {
    if (scores) {
      c.score = 0.0;
      for (auto v : c.voxels) c.score = std::max(c.score, static_cast<double>((*scores)[v]));
    }
    const double vol = static_cast<double>(c.voxels.size()) * g.voxel_volume();
    c.radius_mm = std::cbrt(3.0 * vol / (4.0 * 3.14159265358979323846));
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(),
            [](const OComponent& a, const OComponent& b) { return a.voxels[0] < b.voxels[0]; });
  return out;
}

OCase oracle_case(const Mask& gt, const Mask& pred, const Volume* scores, int connectivity,
                  double min_iou) {
  OCase c;
  c.gt = oracle_components(gt, nullptr, connectivity);
  c.pred = oracle_components(pred, scores, connectivity);
  for (const auto& p : c.pred) {
    int best = -1;
    std::size_t best_n = 0;
    for (std::size_t g = 0; g < c.gt.size(); ++g) {
      const std::size_t n = overlap(p, c.gt[g]);
      if (n == 0) continue;
      const double iou =
          static_cast<double>(n) / static_cast<double>(p.voxels.size() + c.gt[g].voxels.size() - n);
      if (min_iou > 0.0 && iou < min_iou) continue;
      if (n > best_n) {
        best_n = n;
        best = static_cast<int>(g);
      }
    }
    c.pred_to_gt.push_back(best);
  }
  return c;
}

namespace {

OFrocPoint evaluate_at(const std::vector<OCase>& cases, double t, bool per_subject) {
  std::size_t fp = 0, hits = 0, denom = 0;
  for (const auto& c : cases) {
    std::set<int> found;
    for (std::size_t p = 0; p < c.pred.size(); ++p) {
      if (!(c.pred[p].score >= t)) continue;
      if (c.pred_to_gt[p] < 0)
        ++fp;
      else
        found.insert(c.pred_to_gt[p]);
    }
    if (per_subject) {
      if (!c.gt.empty()) {
        ++denom;
        hits += found.empty() ? 0 : 1;
      }
    } else {
      denom += c.gt.size();
      hits += found.size();
    }
  }
  return {t, fp, static_cast<double>(fp) / static_cast<double>(cases.size()),
          static_cast<double>(hits) / static_cast<double>(denom)};
}

}  // namespace

std::vector<OFrocPoint> oracle_froc_points(const std::vector<OCase>& cases, bool per_subject) {
  std::set<double, std::greater<>> ts{std::numeric_limits<double>::infinity()};
  for (const auto& c : cases)
    for (const auto& p : c.pred) ts.insert(p.score);
  std::vector<OFrocPoint> out;
  for (double t : ts) out.push_back(evaluate_at(cases, t, per_subject));
  return out;
}

OFrocPoint oracle_froc_at(const std::vector<OCase>& cases, double target, bool per_subject) {
  OFrocPoint best = evaluate_at(cases, std::numeric_limits<double>::infinity(), per_subject);
  for (const auto& p : oracle_froc_points(cases, per_subject))
    if (p.fp_per_subject <= target && p.threshold < best.threshold) best = p;
  return best;
}

double oracle_dice(const Mask& pred, const Mask& gt) {
  std::set<std::size_t> p, g, both;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > 0) p.insert(i);
    if (gt[i] > 0) g.insert(i);
  }
  std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::inserter(both, both.end()));
  if (p.empty() && g.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(p.size() + g.size());
}

double oracle_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  std::uint64_t twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg)++;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<OBin> oracle_stratified(const std::vector<OCase>& cases, const std::vector<double>& edges,
                                    double target) {
  const double t = oracle_froc_at(cases, target, false).threshold;
  std::vector<OBin> bins(edges.size() - 1);
  for (const auto& c : cases)
    for (std::size_t g = 0; g < c.gt.size(); ++g) {
      bool hit = false;
      for (std::size_t p = 0; p < c.pred.size(); ++p)
        hit = hit || (c.pred_to_gt[p] == static_cast<int>(g) && c.pred[p].score >= t);
      for (std::size_t b = 0; b + 1 < edges.size(); ++b)
        if (c.gt[g].radius_mm >= edges[b] && c.gt[g].radius_mm < edges[b + 1]) {
          ++bins[b].n;
          bins[b].hit += hit;
        }
    }
  for (auto& b : bins)
    if (b.n) b.sensitivity = static_cast<double>(b.hit) / static_cast<double>(b.n);
  return bins;
}

}  // namespace testsupport

namespace testsupport {

namespace {

void paint_blob(Mask& m, std::mt19937_64& rng) {
  const auto& g = m.geometry();
  std::uniform_int_distribution<int> coin(0, 1);
  std::array<std::int64_t, 3> c{}, r{};
  for (int a = 0; a < 3; ++a) {
    c[a] = std::uniform_int_distribution<std::int64_t>(0, static_cast<std::int64_t>(g.dims[a]) - 1)(rng);
    r[a] = std::uniform_int_distribution<std::int64_t>(0, 4)(rng);
  }
  const bool ball = coin(rng);
  for (std::int64_t z = c[2] - r[2]; z <= c[2] + r[2]; ++z)
    for (std::int64_t y = c[1] - r[1]; y <= c[1] + r[1]; ++y)
      for (std::int64_t x = c[0] - r[0]; x <= c[0] + r[0]; ++x) {
        if (!g.contains({x, y, z})) continue;
        if (ball) {
          double d = 0.0;
          const std::int64_t p[3] = {x, y, z};
          for (int a = 0; a < 3; ++a) {
            const double t = static_cast<double>(p[a] - c[a]) / (static_cast<double>(r[a]) + 0.5);
            d += t * t;
          }
          if (d > 1.0) continue;
        }
        m.at({x, y, z}) = 1;
      }
}

}  // namespace

std::vector<MetricCase> random_metric_fixture(std::mt19937_64& rng) {
  pancsynth::Geometry g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = std::uniform_int_distribution<std::size_t>(4, 32)(rng);
    g.spacing[a] = std::uniform_real_distribution<double>(0.5, 3.0)(rng);
  }
  const int n_cases = std::uniform_int_distribution<int>(1, 4)(rng);
  std::vector<MetricCase> out;
  for (int k = 0; k < n_cases; ++k) {
    MetricCase c{Mask(g, std::int16_t{0}), Mask(g, std::int16_t{0}), Volume(g, 0.0f)};
    const int n_gt = std::uniform_int_distribution<int>(0, 4)(rng);
    const int n_pred = std::uniform_int_distribution<int>(0, 5)(rng);
    for (int i = 0; i < n_gt; ++i) paint_blob(c.gt, rng);
    for (int i = 0; i < n_pred; ++i) paint_blob(c.pred, rng);
    // Prediction-like masks often reuse GT shapes.
    if (std::uniform_int_distribution<int>(0, 2)(rng) == 0)
      for (std::size_t i = 0; i < c.gt.size(); ++i)
        if (c.gt[i] > 0 && std::uniform_int_distribution<int>(0, 3)(rng) > 0) c.pred[i] = 1;
    for (std::size_t i = 0; i < c.scores.size(); ++i)
      c.scores[i] = static_cast<float>(std::uniform_int_distribution<int>(0, 10)(rng)) / 10.0f;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace testsupport
