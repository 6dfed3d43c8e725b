#include <doctest.h>

#include <cmath>
#include <limits>

#include "metric_oracles.hpp"
#include "pancsynth/detect_eval.hpp"
#include "pancsynth/errors.hpp"

using namespace pancsynth;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Geometry lattice(std::size_t nx, std::size_t ny = 1, std::size_t nz = 1) {
  Geometry g;
  g.dims = {nx, ny, nz};
  return g;
}

Instance inst(std::vector<std::size_t> voxels, double score = 1.0) {
  Instance i;
  i.voxels = std::move(voxels);
  i.score = score;
  i.volume_mm3 = static_cast<double>(i.voxels.size());
  i.equivalent_radius_mm = std::cbrt(3.0 * i.volume_mm3 / (4.0 * 3.141592653589793));
  return i;
}

// Two-subject fixture: A has a GT hit by a 0.9 prediction plus a 0.4 FP;
// B has a missed GT plus a 0.8 FP.
std::vector<CaseEval> two_subjects() {
  CaseEval a = CaseEval::build({inst({0, 1})}, {inst({1}, 0.9), inst({10}, 0.4)});
  CaseEval b = CaseEval::build({inst({0})}, {inst({20}, 0.8)});
  return {a, b};
}

}  // namespace

TEST_CASE("instances") {
  CHECK(extract_instances(Mask(lattice(4, 4, 4), std::int16_t{0})).empty());

  Mask corner(lattice(2, 2, 2), std::int16_t{0});
  corner(0, 0, 0) = 1;
  corner(1, 1, 1) = 1;
  CHECK(extract_instances(corner, nullptr, Connectivity::twenty_six).size() == 1);
  CHECK(extract_instances(corner, nullptr, Connectivity::six).size() == 2);

  const auto one = extract_instances(Mask(lattice(1), std::int16_t{3}));
  REQUIRE(one.size() == 1);
  CHECK(one[0].equivalent_radius_mm == doctest::Approx(0.6204).epsilon(1e-4));

  Mask m(lattice(5), std::int16_t{0});
  m[1] = m[2] = 1;
  Volume s(lattice(5), 0.0f);
  s[1] = 0.25f;
  s[2] = 0.75f;
  const auto scored = extract_instances(m, &s);
  REQUIRE(scored.size() == 1);
  CHECK(scored[0].score == doctest::Approx(0.75));
  s[2] = 1.5f;
  CHECK_THROWS_AS(extract_instances(m, &s), InvariantError);
}

TEST_CASE("matching") {
  const std::vector<Instance> gt{inst({0, 1, 2}), inst({10, 11})};
  SUBCASE("identity") {
    const auto e = match_instances(gt, gt);
    REQUIRE(e.size() == 2);
    CaseEval c = CaseEval::build(gt, gt);
    CHECK(c.false_positives(0.0) == 0);
  }
  SUBCASE("disjoint") {
    const std::vector<Instance> pred{inst({5}), inst({20, 21})};
    CHECK(match_instances(pred, gt).empty());
    CHECK(CaseEval::build(gt, pred).false_positives(0.0) == 2);
  }
  SUBCASE("one prediction over two GTs counts for the larger overlap only") {
    const std::vector<Instance> pred{inst({2, 10, 11})};
    const auto e = match_instances(pred, gt);
    REQUIRE(e.size() == 1);
    CHECK(e[0].gt == 1);
    CHECK(e[0].overlap == 2);
    const auto det = CaseEval::build(gt, pred).detected(0.0);
    CHECK_FALSE(det[0]);
    CHECK(det[1]);
  }
  SUBCASE("IoU floor") {
    const std::vector<Instance> pred{inst({2, 3, 4, 5})};  // IoU 1/6 with gt[0]
    CHECK(match_instances(pred, gt, {0.2}).empty());
    CHECK(match_instances(pred, gt, {0.1}).size() == 1);
  }
}

TEST_CASE("FROC hand fixtures") {
  SUBCASE("perfect detector") {
    const std::vector<Instance> gt{inst({0}), inst({5})};
    const std::vector<CaseEval> cases{CaseEval::build(gt, gt)};
    const double targets[] = {0.05, 0.7, 1.0};
    for (const auto& t : froc(cases, targets).targets) CHECK(t.sensitivity == 1.0);
  }
  SUBCASE("two subjects at targets 0.5 and 1.0") {
    const auto cases = two_subjects();
    const double targets[] = {0.5, 1.0};
    const auto c = froc(cases, targets);
    REQUIRE(c.points.size() == 4);
    CHECK(c.points[0].threshold == kInf);
    CHECK(c.points[1].threshold == 0.9);
    CHECK(c.points[1].fp_per_subject == 0.0);
    CHECK(c.points[1].sensitivity == 0.5);
    CHECK(c.points[2].fp_per_subject == 0.5);
    CHECK(c.points[3].fp_per_subject == 1.0);
    CHECK(c.targets[0].sensitivity == 0.5);
    CHECK(c.targets[0].threshold == 0.8);
    CHECK(c.targets[1].sensitivity == 0.5);
    CHECK(c.targets[1].threshold == 0.4);
  }
  SUBCASE("per-subject sensitivity") {
    const std::vector<CaseEval> cases{
        CaseEval::build({inst({0}), inst({5})}, {inst({0}, 0.5)}),
        CaseEval::build({inst({0})}, {}),
    };
    const double t[] = {1.0};
    CHECK(froc(cases, t, SensitivityUnit::lesion).targets[0].sensitivity == doctest::Approx(1.0 / 3));
    CHECK(froc(cases, t, SensitivityUnit::subject).targets[0].sensitivity == 0.5);
  }
  SUBCASE("errors") {
    const double t[] = {1.0};
    const std::vector<CaseEval> none{CaseEval::build({}, {inst({0})})};
    CHECK_THROWS_AS(froc(none, t), InvariantError);
    const double bad[] = {0.0};
    CHECK_THROWS_AS(froc(two_subjects(), bad), InvariantError);
  }
}

TEST_CASE("dice") {
  Mask a(lattice(4), std::int16_t{0}), b(lattice(4), std::int16_t{0});
  CHECK(dice(a, b) == 1.0);
  a[0] = a[1] = 1;
  CHECK(dice(a, a) == 1.0);
  b[2] = b[3] = 1;
  CHECK(dice(a, b) == 0.0);
  b[2] = 0;
  b[1] = 2;
  CHECK(dice(a, b) == 0.5);
}

TEST_CASE("stratified sensitivity") {
  const auto cases = two_subjects();
  const double one_bin[] = {0.0, 100.0};
  const double t[] = {0.5};
  const auto bins = stratified_sensitivity(cases, one_bin, 0.5);
  REQUIRE(bins.size() == 1);
  CHECK(*bins[0].sensitivity == froc(cases, t).targets[0].sensitivity);

  // Six GT lesions of radius ~2.9, 12.4 and 21.2 mm (two each); hits: one
  // small, both medium, none large.
  Geometry g = lattice(1);
  g.spacing = {1, 1, 1};
  auto sized = [](double r_mm, std::size_t first) {
    Instance i;
    i.volume_mm3 = 4.0 / 3.0 * 3.141592653589793 * r_mm * r_mm * r_mm;
    i.equivalent_radius_mm = r_mm;
    i.voxels = {first};
    return i;
  };
  std::vector<Instance> gt{sized(2.9, 0), sized(2.9, 1), sized(12.4, 2),
                           sized(12.4, 3), sized(21.2, 4), sized(21.2, 5)};
  std::vector<Instance> pred{inst({0}, 0.9), inst({2}, 0.9), inst({3}, 0.9), inst({99}, 0.2)};
  const std::vector<CaseEval> six{CaseEval::build(gt, pred)};
  const double edges[] = {0.0, 10.0, 20.0, kInf};
  const auto sb = stratified_sensitivity(six, edges, 0.5);  // threshold 0.9, no FP
  REQUIRE(sb.size() == 3);
  CHECK(sb[0].n_gt == 2);
  CHECK(*sb[0].sensitivity == 0.5);
  CHECK(*sb[1].sensitivity == 1.0);
  CHECK(*sb[2].sensitivity == 0.0);

  const double gap[] = {0.0, 1.0, 2.0, kInf};
  const auto empty = stratified_sensitivity(six, gap, 0.5);
  CHECK_FALSE(empty[0].sensitivity.has_value());
  CHECK(empty[0].n_gt == 0);

  const double unordered[] = {10.0, 5.0};
  CHECK_THROWS_AS(stratified_sensitivity(six, unordered, 0.5), InvariantError);
}

TEST_CASE("ROC") {
  const std::vector<int> l{1, 0, 1, 0};
  CHECK(roc(l, std::vector<double>{0.9, 0.8, 0.7, 0.1}).auc == 0.75);
  CHECK(roc(l, std::vector<double>{0.9, 0.1, 0.8, 0.2}).auc == 1.0);
  CHECK(roc(l, std::vector<double>{0.5, 0.5, 0.5, 0.5}).auc == 0.5);
  const auto c = roc(l, std::vector<double>{0.9, 0.8, 0.7, 0.1});
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.back().tpr == 1.0);
  CHECK(c.points.back().fpr == 1.0);
  CHECK_THROWS_AS(roc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}), InvariantError);
  CHECK_THROWS_AS(roc(std::vector<int>{1, 2}, std::vector<double>{0.1, 0.2}), InvariantError);
}

TEST_CASE("randomized agreement with brute-force oracles") {
  std::mt19937_64 rng(2024);
  for (int fixture = 0; fixture < 25; ++fixture) {
    CAPTURE(fixture);
    const auto mc = testsupport::random_metric_fixture(rng);
    for (int conn : {6, 26}) {
      std::vector<CaseEval> cases;
      std::vector<testsupport::OCase> ocases;
      std::size_t n_gt = 0;
      for (const auto& c : mc) {
        const auto cn = conn == 6 ? Connectivity::six : Connectivity::twenty_six;
        cases.push_back(CaseEval::build(extract_instances(c.gt, nullptr, cn),
                                        extract_instances(c.pred, &c.scores, cn)));
        ocases.push_back(testsupport::oracle_case(c.gt, c.pred, &c.scores, conn, 0.0));
        n_gt += ocases.back().gt.size();
        CHECK(dice(c.pred, c.gt) == testsupport::oracle_dice(c.pred, c.gt));
        REQUIRE(cases.back().gt.size() == ocases.back().gt.size());
        REQUIRE(cases.back().pred.size() == ocases.back().pred.size());
        for (std::size_t i = 0; i < ocases.back().pred.size(); ++i) {
          CHECK(cases.back().pred[i].voxels == ocases.back().pred[i].voxels);
          CHECK(cases.back().pred[i].score == ocases.back().pred[i].score);
        }
      }
      if (n_gt == 0) continue;
      const std::vector<double> targets{0.05, 0.5, 0.7, 1.0, 2.0};
      const auto curve = froc(cases, targets);
      const auto opoints = testsupport::oracle_froc_points(ocases, false);
      REQUIRE(curve.points.size() == opoints.size());
      for (std::size_t i = 0; i < opoints.size(); ++i) {
        CHECK(curve.points[i].threshold == opoints[i].threshold);
        CHECK(curve.points[i].fp_per_subject == opoints[i].fp_per_subject);
        CHECK(curve.points[i].sensitivity == opoints[i].sensitivity);
      }
      for (std::size_t k = 0; k < targets.size(); ++k) {
        const auto o = testsupport::oracle_froc_at(ocases, targets[k], false);
        CHECK(curve.targets[k].sensitivity == o.sensitivity);
        CHECK(curve.targets[k].threshold == o.threshold);
      }
      const std::vector<double> edges{0.0, 1.5, 3.0, kInf};
      const auto sb = stratified_sensitivity(cases, edges, 1.0);
      const auto ob = testsupport::oracle_stratified(ocases, edges, 1.0);
      for (std::size_t b = 0; b < ob.size(); ++b) {
        CHECK(sb[b].n_gt == ob[b].n);
        CHECK(sb[b].sensitivity == ob[b].sensitivity);
      }
    }
  }
}

TEST_CASE("randomized ROC agrees with pair counting") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 60)(rng);
    std::vector<int> l(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = static_cast<int>(rng() % 2);
      s[i] = static_cast<double>(rng() % 5) / 4.0;
    }
    l[0] = 0;
    l[1] = 1;
    CHECK(roc(l, s).auc == testsupport::oracle_auc(l, s));
  }
}
