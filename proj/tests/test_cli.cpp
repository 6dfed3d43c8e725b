#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "pancsynth/cli.hpp"
#include "pancsynth/manifest.hpp"
#include "pancsynth/nifti_io.hpp"
#include "pancsynth/stats_model_io.hpp"
#include "pancsynth/synth_io.hpp"
#include "phantom.hpp"
#include "process.hpp"
#include "turing_fixture.hpp"

using namespace pancsynth;
using nlohmann::json;
using testsupport::ProcessResult;
using testsupport::shell_quote;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

ProcessResult run_cli(const TempDir& tmp, const std::string& args, const std::string& env = "") {
  return testsupport::run_command(shell_quote(PANCSYNTH_CLI_PATH) + " " + args, tmp.path(), env);
}

std::string q(const fs::path& p) { return shell_quote(p.string()); }

json error_of(const ProcessResult& r) {
  const auto line = r.err.substr(0, r.err.find('\n'));
  return json::parse(line).at("error");
}

// Healthy phantom cohort: n cases with slightly different noise.
fs::path healthy_cohort(const fs::path& dir, int n) {
  fs::create_directories(dir);
  std::ostringstream csv;
  csv << "case_id,volume,pancreas_mask\n";
  for (int i = 0; i < n; ++i) {
    testsupport::PhantomSpec spec;
    spec.dims = {40, 40, 32};
    spec.semi_axes_mm = {30, 14, 16};
    spec.noise_hu = 5.0;
    spec.noise_seed = static_cast<std::uint64_t>(i);
    const auto p = testsupport::make_phantom(spec);
    const std::string id = "h" + std::to_string(i);
    write_volume(p.volume, dir / (id + ".nii.gz"));
    write_mask(p.pancreas, dir / (id + "_pancreas.nii.gz"));
    csv << id << ',' << id << ".nii.gz," << id << "_pancreas.nii.gz\n";
  }
  testsupport::write_text(dir / "healthy.csv", csv.str());
  return dir / "healthy.csv";
}

TumorStatsModel small_model() {
  TumorStatsModel m;
  m.size_ratio_dist = {0.03, 0.02, 2.0};
  m.intensity_regression = {0.3, 15.0, 3.0};
  m.n_cases = 10;
  return m;
}

fs::path unstratified_config(const fs::path& dir) {
  json cfg = synthesis_config_to_json(SynthesisConfig::unstratified());
  cfg["seed"] = 3;
  const auto p = dir / "config.json";
  testsupport::write_text(p, cfg.dump());
  return p;
}

// 1-D lattice mask with the given voxels set.
Mask line_mask(std::initializer_list<std::size_t> on) {
  Geometry g;
  g.dims = {32, 1, 1};
  Mask m(g, std::int16_t{0});
  for (auto i : on) m[i] = 1;
  return m;
}

}  // namespace

TEST_CASE("usage errors exit 2 with a report and help") {
  TempDir tmp;
  auto r = run_cli(tmp, "synthesize --bogus 1");
  CHECK(r.exit_code == 2);
  CHECK(error_of(r).at("kind") == "usage");
  CHECK(r.err.find("synthesize") != std::string::npos);
  CHECK(r.err.find("--manifest") != std::string::npos);  // subcommand help

  r = run_cli(tmp, "");
  CHECK(r.exit_code == 2);
  r = run_cli(tmp, "synthesize --model m.json --out o");
  CHECK(r.exit_code == 2);
  CHECK(error_of(r).at("message").get<std::string>().find("--manifest") != std::string::npos);

  r = run_cli(tmp, "--version");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find(cli::kVersion) != std::string::npos);
}

TEST_CASE("settings precedence: flag over env over file over default") {
  TempDir tmp;
  testsupport::write_text(tmp / "c.json", R"({"seed": 3, "texture_sigma_hu": 5})");
  auto seed_of = [&](const std::string& args, const std::string& env = "") {
    const auto r = run_cli(tmp, "synthesize --print-config " + args, env);
    REQUIRE(r.exit_code == 0);
    return json::parse(r.out);
  };
  CHECK(seed_of("").at("seed") == 0);
  CHECK(seed_of("--config " + q(tmp / "c.json")).at("seed") == 3);
  CHECK(seed_of("--config " + q(tmp / "c.json")).at("texture_sigma_hu") == 5.0);
  CHECK(seed_of("--config " + q(tmp / "c.json"), "PANCSYNTH_SEED=5").at("seed") == 5);
  CHECK(seed_of("--config " + q(tmp / "c.json") + " --seed 7", "PANCSYNTH_SEED=5").at("seed") == 7);
  CHECK(seed_of("", "PANCSYNTH_CONFIG=" + q(tmp / "c.json")).at("seed") == 3);

  testsupport::write_text(tmp / "bad.json", R"({"sede": 3})");
  const auto r = run_cli(tmp, "synthesize --print-config --config " + q(tmp / "bad.json"));
  CHECK(r.exit_code == 1);
  CHECK(error_of(r).at("message").get<std::string>().find("sede") != std::string::npos);

  const auto ev = run_cli(tmp, "evaluate --print-config --min-iou 0.2");
  REQUIRE(ev.exit_code == 0);
  const auto s = json::parse(ev.out);
  CHECK(s.at("fp_targets") == json({0.05, 0.7, 0.8, 0.9, 1.0}));
  CHECK(s.at("radius_bins_mm") == json({0.0, 10.0, 20.0, nullptr}));
  CHECK(s.at("min_iou") == 0.2);
}

TEST_CASE("missing inputs exit 1 with a machine-readable report") {
  TempDir tmp;
  save_stats_model(small_model(), tmp / "model.json");
  auto r = run_cli(tmp, "synthesize --manifest " + q(tmp / "none.csv") + " --model " +
                        q(tmp / "model.json") + " --out " + q(tmp / "out"));
  CHECK(r.exit_code == 1);
  CHECK(error_of(r).at("kind") == "io");
  CHECK(error_of(r).at("message").get<std::string>().find("none.csv") != std::string::npos);

  testsupport::write_text(tmp / "m.csv", "case_id,volume,pancreas_mask\na,missing.nii,missing.nii\n");
  r = run_cli(tmp, "synthesize --manifest " + q(tmp / "m.csv") + " --model " + q(tmp / "model.json") +
                   " --out " + q(tmp / "out"));
  CHECK(r.exit_code == 1);
  CHECK(error_of(r).at("kind") == "io");
}

TEST_CASE("fit-stats recovers an exact intensity law and writes provenance") {
  TempDir tmp;
  // Four cases with pancreas HU m and a ball tumor at 0.7 m - 15, i.e.
  // residual m - t = 0.3 m + 15 exactly.
  const double ms[] = {60, 90, 120, 150};
  std::ostringstream csv;
  csv << "case_id,volume,pancreas_mask,tumor_mask\n";
  std::vector<double> ratios;
  for (int i = 0; i < 4; ++i) {
    testsupport::PhantomSpec spec;
    spec.dims = {40, 40, 32};
    spec.semi_axes_mm = {30, 14, 16};
    spec.pancreas_hu = ms[i];
    auto p = testsupport::make_phantom(spec);
    Mask tumor(p.volume.geometry(), std::int16_t{0});
    std::size_t n_t = 0, n_p = 0;
    for (std::size_t z = 0; z < 32; ++z)
      for (std::size_t y = 0; y < 40; ++y)
        for (std::size_t x = 0; x < 40; ++x) {
          n_p += p.pancreas(x, y, z) > 0;
          const double dx = (x - 19.5) * 2.0 - 4.0 * i, dy = (y - 19.5) * 2.0, dz = (z - 15.5) * 2.5;
          if (dx * dx + dy * dy + dz * dz <= 5.0 * 5.0 + i) {
            tumor(x, y, z) = 1;
            p.volume(x, y, z) = static_cast<float>(0.7 * ms[i] - 15.0);
            ++n_t;
          }
        }
    ratios.push_back(static_cast<double>(n_t) / static_cast<double>(n_p));
    const std::string id = "t" + std::to_string(i);
    write_volume(p.volume, tmp / (id + ".nii.gz"));
    write_mask(p.pancreas, tmp / (id + "_p.nii.gz"));
    write_mask(tumor, tmp / (id + "_t.nii.gz"));
    csv << id << ',' << id << ".nii.gz," << id << "_p.nii.gz," << id << "_t.nii.gz\n";
  }
  testsupport::write_text(tmp / "cohort.csv", csv.str());

  auto r = run_cli(tmp, "fit-stats --manifest " + q(tmp / "cohort.csv") + " --out " +
                        q(tmp / "out" / "model.json") + " --radius 12 --jobs 2");
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto model = load_stats_model(tmp / "out" / "model.json");
  CHECK(model.n_cases == 4);
  CHECK(model.neighborhood_radius_mm == 12.0);
  CHECK(model.intensity_regression.alpha == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(model.intensity_regression.beta == doctest::Approx(15.0).epsilon(1e-9));
  CHECK(model.intensity_regression.sigma_eps == doctest::Approx(0.0).epsilon(1e-6));

  const auto rec = json::parse(testsupport::read_text(tmp / "out" / "model.json.provenance.json"));
  CHECK(rec.at("tool") == cli::kToolName);
  CHECK(rec.at("version") == cli::kVersion);
  CHECK(rec.at("config").at("neighborhood_radius_mm") == 12.0);
  REQUIRE(rec.at("cases").size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rec.at("cases")[i].at("size_ratio").get<double>() == doctest::Approx(ratios[i]));
    CHECK(rec.at("cases")[i].at("neighborhood_median") == ms[i]);
  }

  // Rerun from the sidecar reproduces the model byte for byte.
  r = run_cli(tmp, "fit-stats --config " + q(tmp / "out" / "model.json.provenance.json") +
                   " --manifest " + q(tmp / "cohort.csv") + " --out " + q(tmp / "again.json"));
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  CHECK(testsupport::read_text(tmp / "again.json") ==
        testsupport::read_text(tmp / "out" / "model.json"));
}

TEST_CASE("synthesize is byte-identical across runs and job counts") {
  TempDir tmp;
  const auto manifest = healthy_cohort(tmp / "in", 3);
  save_stats_model(small_model(), tmp / "model.json");
  const auto cfg = unstratified_config(tmp.path());
  const std::string base = "synthesize --manifest " + q(manifest) + " --model " +
                           q(tmp / "model.json") + " --config " + q(cfg);
  for (const char* run : {"a", "b", "c"}) {
    const std::string jobs = std::string(run) == "c" ? "2" : "1";
    const auto r = run_cli(tmp, base + " --jobs " + jobs + " --out " + q(tmp / run));
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  }
  const auto a = testsupport::snapshot_tree(tmp / "a");
  CHECK(a.size() == 3 * 2 * 3 + 2);  // per variant: volume, mask, sidecar
  CHECK(a == testsupport::snapshot_tree(tmp / "b"));
  CHECK(a == testsupport::snapshot_tree(tmp / "c"));

  const auto out = Manifest::read(tmp / "a" / "manifest.csv");
  REQUIRE(out.size() == 6);
  CHECK(out.get(0, "case_id") == "h0_syn0");
  CHECK(out.get(5, "source_case") == "h2");
  CHECK(out.get(0, "placed_tumors") == "1");
  const Mask m = read_mask(out.path(1, "tumor_mask"));
  std::size_t n = 0;
  for (auto v : m.values()) n += v > 0;
  CHECK(n > 0);
  const auto rec = json::parse(testsupport::read_text(tmp / "a" / "h1_syn0.provenance.json"));
  CHECK(rec.at("config").at("seed") == 3);
  CHECK(rec.at("synthesis").at("tumors").size() == 1);

  // A different seed changes the images; rerunning from the batch sidecar
  // reproduces them.
  auto r = run_cli(tmp, base + " --seed 4 --out " + q(tmp / "d"));
  REQUIRE(r.exit_code == 0);
  CHECK(testsupport::read_text(tmp / "d" / "h0_syn0.nii.gz") !=
        testsupport::read_text(tmp / "a" / "h0_syn0.nii.gz"));
  r = run_cli(tmp, "synthesize --manifest " + q(manifest) + " --model " + q(tmp / "model.json") +
                   " --config " + q(tmp / "a" / "run.provenance.json") + " --out " + q(tmp / "e"));
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  CHECK(a == testsupport::snapshot_tree(tmp / "e"));
}

TEST_CASE("evaluate reproduces the two-subject FROC hand derivation") {
  TempDir tmp;
  // A: GT {0,1} hit by a 0.9 prediction, plus a 0.4 FP. B: GT {0} missed,
  // plus a 0.8 FP.
  write_mask(line_mask({0, 1}), tmp / "a_gt.nii.gz");
  write_mask(line_mask({1, 10}), tmp / "a_pred.nii.gz");
  write_mask(line_mask({0}), tmp / "b_gt.nii.gz");
  write_mask(line_mask({20}), tmp / "b_pred.nii.gz");
  Geometry g;
  g.dims = {32, 1, 1};
  Volume sa(g, 0.0f), sb(g, 0.0f);
  sa[1] = 0.9f;
  sa[10] = 0.4f;
  sb[20] = 0.8f;
  write_volume(sa, tmp / "a_score.nii.gz");
  write_volume(sb, tmp / "b_score.nii.gz");
  testsupport::write_text(tmp / "pred.csv",
                          "case_id,mask,score_map\na,a_pred.nii.gz,a_score.nii.gz\n"
                          "b,b_pred.nii.gz,b_score.nii.gz\n");
  testsupport::write_text(tmp / "gt.csv", "case_id,mask\nb,b_gt.nii.gz\na,a_gt.nii.gz\n");

  auto r = run_cli(tmp, "evaluate --pred " + q(tmp / "pred.csv") + " --gt " + q(tmp / "gt.csv") +
                        " --fp-targets 0.5,1.0 --out " + q(tmp / "ev"));
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto rep = json::parse(testsupport::read_text(tmp / "ev" / "report.json"));
  const auto& t = rep.at("froc").at("targets");
  REQUIRE(t.size() == 2);
  CHECK(t[0].at("sensitivity") == 0.5);
  CHECK(t[0].at("fp_per_subject") == 0.5);
  CHECK(std::abs(t[0].at("threshold").get<double>() - 0.8) < 1e-6);
  CHECK(t[1].at("sensitivity") == 0.5);
  CHECK(t[1].at("fp_per_subject") == 1.0);
  CHECK(std::abs(t[1].at("threshold").get<double>() - 0.4) < 1e-6);
  // Dice: A 2*1/(2+2) = 0.5, B 0.
  CHECK(rep.at("dice").at("mean") == 0.25);

  const auto summary = testsupport::read_text(tmp / "ev" / "summary.csv");
  CHECK(summary.rfind("metric,fp_target,radius_bin_mm,n_gt,value\n", 0) == 0);
  CHECK(summary.find("sensitivity,0.5,all,2,0.5\n") != std::string::npos);
  const auto tsv = testsupport::read_text(tmp / "ev" / "froc.tsv");
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 5);  // header + 4 thresholds

  // Defaults expose the standard targets and the 20 mm edge.
  r = run_cli(tmp, "evaluate --pred " + q(tmp / "pred.csv") + " --gt " + q(tmp / "gt.csv") + " --out " +
                   q(tmp / "ev2"));
  REQUIRE(r.exit_code == 0);
  const auto rep2 = json::parse(testsupport::read_text(tmp / "ev2" / "report.json"));
  std::vector<double> targets;
  for (const auto& x : rep2.at("froc").at("targets")) targets.push_back(x.at("fp_target"));
  CHECK(targets == std::vector<double>{0.05, 0.7, 0.8, 0.9, 1.0});
  const auto& bins = rep2.at("stratified")[0].at("bins");
  REQUIRE(bins.size() == 3);
  CHECK(bins[1].at("hi_mm") == 20.0);
  CHECK(bins[2].at("lo_mm") == 20.0);
  CHECK(bins[2].at("sensitivity").is_null());

  testsupport::write_text(tmp / "gt_bad.csv", "case_id,mask\nzz,b_gt.nii.gz\n");
  r = run_cli(tmp, "evaluate --pred " + q(tmp / "pred.csv") + " --gt " + q(tmp / "gt_bad.csv") +
                   " --out " + q(tmp / "ev3"));
  CHECK(r.exit_code == 1);
  CHECK(error_of(r).at("kind") == "invariant");
}

TEST_CASE("turing-export separates items from the answer key") {
  TempDir tmp;
  const auto f = testsupport::make_turing_fixture(tmp / "data", 4, 4);
  const auto r = run_cli(tmp, "turing-export --real " + q(f.real_manifest) + " --synth " +
                              q(f.synth_manifest) + " --n-per-class 3 --seed 9 --out " +
                              q(tmp / "ex"));
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto items = testsupport::read_text(tmp / "ex" / "items.csv");
  CHECK(items.find("real") == std::string::npos);
  CHECK(items.find("synthetic") == std::string::npos);
  const auto key = Manifest::read(tmp / "ex" / "answer_key.csv");
  REQUIRE(key.size() == 6);
  int n_syn = 0;
  for (std::size_t i = 0; i < key.size(); ++i) {
    n_syn += key.get(i, "truth") == "synthetic";
    const auto png = testsupport::read_text(tmp / "ex" / "images" /
                                            ("item_00" + std::to_string(i + 1) + ".png"));
    CHECK(png.substr(1, 3) == "PNG");
  }
  CHECK(n_syn == 3);
  const auto rec = json::parse(testsupport::read_text(tmp / "ex" / "export.provenance.json"));
  CHECK(rec.at("config").at("seed") == 9);
  CHECK(rec.at("config").at("n_per_class") == 3);
}
