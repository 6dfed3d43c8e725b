#include "pancsynth/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pancsynth/cohort_stats.hpp"
#include "pancsynth/detect_eval.hpp"
#include "pancsynth/errors.hpp"
#include "pancsynth/manifest.hpp"
#include "pancsynth/nifti_io.hpp"
#include "pancsynth/render.hpp"
#include "pancsynth/stats_model_io.hpp"
#include "pancsynth/synth.hpp"
#include "pancsynth/synth_io.hpp"
#include "pancsynth/turing.hpp"
#include "pancsynth/turing_server.hpp"

namespace pancsynth::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string abs_path(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

/// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex m;
  auto worker = [&] {
    while (!failed) {
      const std::size_t i = next++;
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!first) first = std::current_exception();
        failed = true;
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1,
                                                      std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Loads a --config file. A provenance sidecar written by this tool is also
/// accepted; its embedded config is used.
json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j = json_util::read_file(path);
  if (j.is_object() && j.contains("tool") && j.contains("config")) j = j.at("config");
  if (!j.is_object()) throw InvariantError("config file must hold a JSON object: " + path);
  return j;
}

void merge_known(json& settings, const json& file, const std::string& command) {
  for (const auto& [k, v] : file.items()) {
    if (!settings.contains(k)) throw InvariantError("unknown " + command + " config key '" + k + "'");
    settings[k] = v;
  }
}

json record(const std::string& command, const json& config, const json& inputs,
            const std::vector<std::string>& rerun) {
  return {{"tool", kToolName}, {"version", kVersion}, {"command", command},
          {"config", config},  {"inputs", inputs},    {"rerun", rerun}};
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string safe_name(const std::string& id) {
  std::string s = id;
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s.empty() ? "case" : s;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

// ---------------------------------------------------------------- fit-stats

struct FitStatsArgs {
  std::string manifest, out, config;
  std::string tumor_type;
  double radius = 0.0;
  int jobs = 1;
  bool print_config = false;
  CLI::Option* tumor_type_opt = nullptr;
  CLI::Option* radius_opt = nullptr;
};

int fit_stats(const FitStatsArgs& a, std::ostream& out) {
  json settings{{"tumor_type", to_string(TumorType::pdac)},
                {"neighborhood_radius_mm", kDefaultNeighborhoodRadiusMm}};
  merge_known(settings, load_config(a.config), "fit-stats");
  if (a.tumor_type_opt->count()) settings["tumor_type"] = a.tumor_type;
  if (a.radius_opt->count()) settings["neighborhood_radius_mm"] = a.radius;
  const TumorType type = parse_tumor_type(settings.at("tumor_type").get<std::string>());
  settings["tumor_type"] = to_string(type);
  const double radius = settings.at("neighborhood_radius_mm").get<double>();
  if (!(radius > 0.0)) throw InvariantError("neighborhood_radius_mm must be > 0");
  if (a.print_config) {
    out << settings.dump(2) << '\n';
    return 0;
  }
  require(!a.manifest.empty(), "--manifest is required");
  require(!a.out.empty(), "--out is required");

  const Manifest m = Manifest::read(a.manifest);
  m.require_columns({"volume", "pancreas_mask", "tumor_mask"});
  std::vector<CaseStats> stats(m.size());
  parallel_for(m.size(), resolve_jobs(a.jobs), [&](std::size_t i) {
    try {
      stats[i] = compute_case_stats(read_volume(m.path(i, "volume")),
                                    read_mask(m.path(i, "pancreas_mask")),
                                    read_mask(m.path(i, "tumor_mask")), radius);
    } catch (const InvariantError& e) {
      throw InvariantError("case " + m.case_id(i) + ": " + e.what());
    }
  });
  const TumorStatsModel model = fit_stats_model(stats, radius, type);

  const fs::path out_path = a.out;
  if (out_path.has_parent_path()) make_dir(out_path.parent_path());
  save_stats_model(model, out_path);

  json cases = json::array();
  for (std::size_t i = 0; i < m.size(); ++i)
    cases.push_back({{"case_id", m.case_id(i)},
                     {"size_ratio", stats[i].size_ratio},
                     {"neighborhood_median", stats[i].neighborhood_median},
                     {"tumor_median", stats[i].tumor_median},
                     {"intensity_residual", stats[i].intensity_residual},
                     {"offset_z", stats[i].offset_z}});
  const std::string sidecar = out_path.filename().string() + ".provenance.json";
  json rec = record("fit-stats", settings, {{"manifest", abs_path(a.manifest)}},
                    {kToolName, "fit-stats", "--manifest", abs_path(a.manifest), "--config", sidecar,
                     "--out", out_path.filename().string()});
  rec["outputs"] = {out_path.filename().string()};
  rec["cases"] = std::move(cases);
  json_util::write_file(rec, fs::path(out_path.string() + ".provenance.json"));
  return 0;
}

// --------------------------------------------------------------- synthesize

struct SynthesizeArgs {
  std::string manifest, model, out, config;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool print_config = false;
  CLI::Option* seed_opt = nullptr;
};

struct SynthOutput {
  std::string case_id, source_case, volume, tumor_mask, pancreas_mask, provenance;
  int variant = 0;
  int placed = 0;
  bool count_reduced = false;
};

int synthesize(const SynthesizeArgs& a, std::ostream& out) {
  json settings = synthesis_config_to_json(synthesis_config_from_json(load_config(a.config)));
  if (a.seed_opt->count()) settings["seed"] = a.seed;
  const SynthesisConfig cfg = synthesis_config_from_json(settings);
  if (a.print_config) {
    out << settings.dump(2) << '\n';
    return 0;
  }
  require(!a.manifest.empty(), "--manifest is required");
  require(!a.model.empty(), "--model is required");
  require(!a.out.empty(), "--out is required");

  const TumorStatsModel model = load_stats_model(a.model);
  const Manifest m = Manifest::read(a.manifest);
  m.require_columns({"volume", "pancreas_mask"});
  std::vector<std::string> names(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    names[i] = safe_name(m.case_id(i));
    for (std::size_t j = 0; j < i; ++j)
      if (names[j] == names[i]) throw InvariantError("duplicate case id '" + names[i] + "'");
  }

  const fs::path dir = a.out;
  make_dir(dir);
  const std::string batch_sidecar = "run.provenance.json";
  const std::vector<std::string> rerun{kToolName,       "synthesize", "--manifest",
                                       abs_path(a.manifest), "--model", abs_path(a.model),
                                       "--config",      batch_sidecar};
  const json inputs{{"manifest", abs_path(a.manifest)},
                    {"model", abs_path(a.model)},
                    {"model_content", stats_model_to_json(model)}};

  const auto variants = static_cast<std::size_t>(cfg.variants_per_case);
  std::vector<SynthOutput> outputs(m.size() * variants);
  parallel_for(m.size(), resolve_jobs(a.jobs), [&](std::size_t i) {
    const Volume v = read_volume(m.path(i, "volume"));
    const Mask pancreas = read_mask(m.path(i, "pancreas_mask"));
    for (std::size_t k = 0; k < variants; ++k) {
      const std::uint64_t case_seed = derive_seed(cfg.seed, i * variants + k);
      SynthesisResult r;
      try {
        r = synthesize_tumor(v, pancreas, model, cfg, case_seed);
      } catch (const InvariantError& e) {
        throw InvariantError("case " + m.case_id(i) + ": " + e.what());
      }
      const std::string stem = names[i] + "_syn" + std::to_string(k);
      SynthOutput& o = outputs[i * variants + k];
      o = {stem,
           m.case_id(i),
           stem + ".nii.gz",
           stem + "_tumor.nii.gz",
           abs_path(m.path(i, "pancreas_mask")),
           stem + ".provenance.json",
           static_cast<int>(k),
           r.provenance.placed_tumors,
           r.provenance.count_reduced};
      write_volume(r.volume_out, dir / o.volume);
      write_mask(r.tumor_mask, dir / o.tumor_mask);

      json rec = record("synthesize", settings, inputs, rerun);
      rec["case"] = {{"row", i + 1},
                     {"case_id", m.case_id(i)},
                     {"volume", abs_path(m.path(i, "volume"))},
                     {"pancreas_mask", o.pancreas_mask},
                     {"variant", k},
                     {"seed", case_seed}};
      rec["outputs"] = {o.volume, o.tumor_mask};
      rec["synthesis"] = provenance_to_json(r.provenance);
      json_util::write_file(rec, dir / o.provenance);
    }
  });

  std::ostringstream csv;
  csv << "case_id,source_case,variant,volume,tumor_mask,pancreas_mask,provenance,placed_tumors,"
         "count_reduced\n";
  std::size_t reduced = 0;
  for (const auto& o : outputs) {
    csv << csv_escape(o.case_id) << ',' << csv_escape(o.source_case) << ',' << o.variant << ','
        << csv_escape(o.volume) << ',' << csv_escape(o.tumor_mask) << ','
        << csv_escape(o.pancreas_mask) << ',' << csv_escape(o.provenance) << ',' << o.placed << ','
        << (o.count_reduced ? "true" : "false") << '\n';
    reduced += o.count_reduced;
  }
  write_text(dir / "manifest.csv", csv.str());
  json rec = record("synthesize", settings, inputs, rerun);
  rec["outputs"] = {"manifest.csv"};
  rec["n_cases"] = m.size();
  rec["n_outputs"] = outputs.size();
  rec["count_reduced_outputs"] = reduced;
  json_util::write_file(rec, dir / batch_sidecar);
  return 0;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string pred, gt, out, config;
  std::vector<double> fp_targets, bins;
  int connectivity = 26;
  double min_iou = 0.0;
  std::string unit;
  int jobs = 1;
  bool print_config = false;
  CLI::Option *fp_opt = nullptr, *bins_opt = nullptr, *conn_opt = nullptr, *iou_opt = nullptr,
              *unit_opt = nullptr;
};

json edges_to_json(const std::vector<double>& edges) {
  json j = json::array();
  for (double e : edges) j.push_back(finite_or_null(e));
  return j;
}

std::vector<double> edges_from_json(const json& j) {
  std::vector<double> out;
  for (const auto& e : j) out.push_back(e.is_null() ? kInf : e.get<double>());
  return out;
}

int evaluate(const EvaluateArgs& a, std::ostream& out) {
  json settings{{"fp_targets", {0.05, 0.7, 0.8, 0.9, 1.0}},
                {"radius_bins_mm", edges_to_json({0.0, 10.0, 20.0, kInf})},
                {"connectivity", 26},
                {"min_iou", 0.0},
                {"sensitivity_unit", "lesion"}};
  merge_known(settings, load_config(a.config), "evaluate");
  if (a.fp_opt->count()) settings["fp_targets"] = a.fp_targets;
  if (a.bins_opt->count()) settings["radius_bins_mm"] = edges_to_json(a.bins);
  if (a.conn_opt->count()) settings["connectivity"] = a.connectivity;
  if (a.iou_opt->count()) settings["min_iou"] = a.min_iou;
  if (a.unit_opt->count()) settings["sensitivity_unit"] = a.unit;

  const auto targets = settings.at("fp_targets").get<std::vector<double>>();
  const auto edges = edges_from_json(settings.at("radius_bins_mm"));
  const int conn_n = settings.at("connectivity").get<int>();
  if (conn_n != 6 && conn_n != 26) throw InvariantError("connectivity must be 6 or 26");
  const auto conn = conn_n == 6 ? Connectivity::six : Connectivity::twenty_six;
  const MatchOptions match{settings.at("min_iou").get<double>()};
  const auto unit_s = settings.at("sensitivity_unit").get<std::string>();
  if (unit_s != "lesion" && unit_s != "subject")
    throw InvariantError("sensitivity_unit must be lesion or subject");
  const auto unit = unit_s == "lesion" ? SensitivityUnit::lesion : SensitivityUnit::subject;
  if (a.print_config) {
    out << settings.dump(2) << '\n';
    return 0;
  }
  require(!a.pred.empty(), "--pred is required");
  require(!a.gt.empty(), "--gt is required");
  require(!a.out.empty(), "--out is required");

  const Manifest pm = Manifest::read(a.pred);
  const Manifest gm = Manifest::read(a.gt);
  pm.require_columns({"mask"});
  gm.require_columns({"mask"});
  std::map<std::string, std::size_t> pred_row;
  for (std::size_t i = 0; i < pm.size(); ++i)
    if (!pred_row.emplace(pm.case_id(i), i).second)
      throw InvariantError("duplicate prediction case '" + pm.case_id(i) + "'");
  std::vector<std::size_t> pairing(gm.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < gm.size(); ++i) {
    const auto it = pred_row.find(gm.case_id(i));
    if (it == pred_row.end()) throw InvariantError("no prediction for case '" + gm.case_id(i) + "'");
    if (!seen.insert(gm.case_id(i)).second)
      throw InvariantError("duplicate ground-truth case '" + gm.case_id(i) + "'");
    pairing[i] = it->second;
  }
  if (seen.size() != pm.size()) throw InvariantError("prediction cases without ground truth");

  const bool has_scores = pm.has_column("score_map");
  std::vector<CaseEval> cases(gm.size());
  std::vector<double> dices(gm.size());
  parallel_for(gm.size(), resolve_jobs(a.jobs), [&](std::size_t i) {
    const std::size_t p = pairing[i];
    const Mask gt = read_mask(gm.path(i, "mask"));
    const Mask pred = read_mask(pm.path(p, "mask"));
    std::optional<Volume> scores;
    if (has_scores && !pm.get(p, "score_map").empty()) scores = read_volume(pm.path(p, "score_map"));
    require_same_lattice(pred.geometry(), gt.geometry(), ("case " + gm.case_id(i)).c_str());
    dices[i] = dice(pred, gt);
    cases[i] = CaseEval::build(extract_instances(gt, nullptr, conn),
                               extract_instances(pred, scores ? &*scores : nullptr, conn), match);
  });

  const FrocCurve curve = froc(cases, targets, unit);
  json report;
  report["n_cases"] = curve.n_cases;
  report["n_gt_lesions"] = curve.n_gt;
  report["sensitivity_unit"] = unit_s;
  json pts = json::array();
  for (const auto& p : curve.points)
    pts.push_back({{"threshold", finite_or_null(p.threshold)},
                   {"false_positives", p.false_positives},
                   {"fp_per_subject", p.fp_per_subject},
                   {"sensitivity", p.sensitivity}});
  json tg = json::array();
  for (const auto& t : curve.targets)
    tg.push_back({{"fp_target", t.fp_target},
                  {"sensitivity", t.sensitivity},
                  {"threshold", finite_or_null(t.threshold)},
                  {"fp_per_subject", t.fp_per_subject}});
  report["froc"] = {{"points", pts}, {"targets", tg}};

  double dice_sum = 0.0;
  json per_case = json::array();
  for (std::size_t i = 0; i < gm.size(); ++i) {
    dice_sum += dices[i];
    per_case.push_back({{"case_id", gm.case_id(i)},
                        {"dice", dices[i]},
                        {"gt_lesions", cases[i].gt.size()},
                        {"pred_instances", cases[i].pred.size()}});
  }
  const double dice_mean = dice_sum / static_cast<double>(gm.size());
  report["dice"] = {{"mean", dice_mean}, {"per_case", per_case}};

  std::ostringstream csv;
  csv << "metric,fp_target,radius_bin_mm,n_gt,value\n";
  json strat = json::array();
  for (const auto& t : curve.targets) {
    csv << "sensitivity," << fmt(t.fp_target) << ",all," << curve.n_gt << ',' << fmt(t.sensitivity)
        << '\n';
    const auto bins = stratified_sensitivity(cases, edges, t.fp_target);
    json jb = json::array();
    for (const auto& b : bins) {
      jb.push_back({{"lo_mm", b.lo_mm},
                    {"hi_mm", finite_or_null(b.hi_mm)},
                    {"n_gt", b.n_gt},
                    {"detected", b.detected},
                    {"sensitivity", b.sensitivity ? json(*b.sensitivity) : json(nullptr)}});
      csv << "sensitivity," << fmt(t.fp_target) << ",[" << fmt(b.lo_mm) << ' ' << fmt(b.hi_mm)
          << ")," << b.n_gt << ',' << (b.sensitivity ? fmt(*b.sensitivity) : "") << '\n';
    }
    strat.push_back({{"fp_target", t.fp_target},
                     {"threshold", finite_or_null(t.threshold)},
                     {"bins", jb}});
  }
  csv << "dice_mean,,,," << fmt(dice_mean) << '\n';
  report["stratified"] = strat;

  std::ostringstream tsv;
  tsv << "threshold\tfalse_positives\tfp_per_subject\tsensitivity\n";
  for (const auto& p : curve.points)
    tsv << fmt(p.threshold) << '\t' << p.false_positives << '\t' << fmt(p.fp_per_subject) << '\t'
        << fmt(p.sensitivity) << '\n';

  const fs::path dir = a.out;
  make_dir(dir);
  json_util::write_file(report, dir / "report.json");
  write_text(dir / "summary.csv", csv.str());
  write_text(dir / "froc.tsv", tsv.str());
  json rec = record("evaluate", settings, {{"pred", abs_path(a.pred)}, {"gt", abs_path(a.gt)}},
                    {kToolName, "evaluate", "--pred", abs_path(a.pred), "--gt", abs_path(a.gt),
                     "--config", "evaluation.provenance.json"});
  rec["outputs"] = {"report.json", "summary.csv", "froc.tsv"};
  json_util::write_file(rec, dir / "evaluation.provenance.json");
  return 0;
}

// ------------------------------------------------------------ turing-export

struct ExportArgs {
  std::string real, synth, out, config, slice_policy;
  std::size_t n_per_class = 0;
  std::uint64_t seed = 0;
  bool overlay = false;
  double level = 0.0, width = 0.0;
  int jobs = 1;
  bool print_config = false;
  CLI::Option *n_opt = nullptr, *seed_opt = nullptr, *overlay_opt = nullptr, *policy_opt = nullptr,
              *level_opt = nullptr, *width_opt = nullptr;
};

int turing_export(const ExportArgs& a, std::ostream& out) {
  json settings = turing::options_to_json(turing::SessionOptions{});
  merge_known(settings, load_config(a.config), "turing-export");
  if (a.n_opt->count()) settings["n_per_class"] = a.n_per_class;
  if (a.seed_opt->count()) settings["seed"] = a.seed;
  if (a.overlay_opt->count()) settings["overlay"] = a.overlay;
  if (a.policy_opt->count()) settings["slice_policy"] = a.slice_policy;
  if (a.level_opt->count()) settings["window"]["level"] = a.level;
  if (a.width_opt->count()) settings["window"]["width"] = a.width;
  turing::SessionOptions opts;
  try {
    opts = turing::options_from_json(settings);
  } catch (const turing::ServiceError& e) {
    throw InvariantError(e.what());
  }
  if (a.print_config) {
    out << settings.dump(2) << '\n';
    return 0;
  }
  require(!a.real.empty(), "--real is required");
  require(!a.synth.empty(), "--synth is required");
  require(!a.out.empty(), "--out is required");

  const auto items =
      turing::build_study_items(Manifest::read(a.real), Manifest::read(a.synth), opts);
  const fs::path dir = a.out;
  make_dir(dir / "images");
  auto image_name = [](int id) {
    std::ostringstream os;
    os << "images/item_" << std::setw(3) << std::setfill('0') << id << ".png";
    return os.str();
  };
  parallel_for(items.size(), resolve_jobs(a.jobs), [&](std::size_t i) {
    const auto& it = items[i];
    const Volume v = read_volume(it.volume);
    const auto img = opts.overlay
                         ? render_slice_overlay(v, read_mask(it.tumor_mask), Axis::z, it.slice,
                                                opts.window)
                         : render_slice(v, Axis::z, it.slice, opts.window);
    write_bytes(dir / image_name(it.item_id), img.png);
  });

  std::ostringstream items_csv, key_csv;
  items_csv << "item_id,image\n";
  key_csv << "item_id,truth,case_id,slice,radius_mm,volume,tumor_mask\n";
  for (const auto& it : items) {
    items_csv << it.item_id << ',' << image_name(it.item_id) << '\n';
    key_csv << it.item_id << ',' << turing::to_string(it.truth) << ',' << csv_escape(it.case_id)
            << ',' << it.slice << ',' << fmt(it.radius_mm) << ',' << csv_escape(it.volume) << ','
            << csv_escape(it.tumor_mask) << '\n';
  }
  write_text(dir / "items.csv", items_csv.str());
  write_text(dir / "answer_key.csv", key_csv.str());
  json rec = record("turing-export", settings,
                    {{"real", abs_path(a.real)}, {"synth", abs_path(a.synth)}},
                    {kToolName, "turing-export", "--real", abs_path(a.real), "--synth",
                     abs_path(a.synth), "--config", "export.provenance.json"});
  rec["outputs"] = {"items.csv", "answer_key.csv", "images/"};
  json_util::write_file(rec, dir / "export.provenance.json");
  return 0;
}

// -------------------------------------------------------------------- serve

struct ServeArgs {
  std::string host, data_dir, ui_dir, config;
  int port = 0;
  bool print_config = false;
  CLI::Option *host_opt = nullptr, *port_opt = nullptr, *data_opt = nullptr, *ui_opt = nullptr;
};

int serve(const ServeArgs& a, std::ostream& out) {
  const turing::ServerOptions defaults;
  json settings{{"host", defaults.host},
                {"port", defaults.port},
                {"data_dir", defaults.data_dir.string()},
                {"ui_dir", defaults.ui_dir.string()}};
  merge_known(settings, load_config(a.config), "serve");
  if (a.host_opt->count()) settings["host"] = a.host;
  if (a.port_opt->count()) settings["port"] = a.port;
  if (a.data_opt->count()) settings["data_dir"] = a.data_dir;
  if (a.ui_opt->count()) settings["ui_dir"] = a.ui_dir;
  turing::ServerOptions o;
  o.host = settings.at("host").get<std::string>();
  o.port = settings.at("port").get<int>();
  o.data_dir = settings.at("data_dir").get<std::string>();
  o.ui_dir = settings.at("ui_dir").get<std::string>();
  if (o.port < 0 || o.port > 65535) throw InvariantError("port must be in [0, 65535]");
  if (a.print_config) {
    out << settings.dump(2) << '\n';
    return 0;
  }
  turing::Server server(o);
  const int port = server.bind();
  settings["port"] = port;
  out << record("serve", settings, json::object(), {}).dump() << std::endl;
  server.serve();
  return 0;
}

// -------------------------------------------------------------------- main

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  if (dynamic_cast<const InvariantError*>(&e) || dynamic_cast<const json::exception*>(&e) ||
      dynamic_cast<const turing::ServiceError*>(&e))
    return "invariant";
  return "internal";
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic pancreatic tumor generation, detection evaluation and reader study tools",
               kToolName};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  FitStatsArgs fa;
  auto* fit = app.add_subcommand("fit-stats", "Fit a tumor statistics model from a labeled cohort");
  fit->add_option("--manifest", fa.manifest, "Cohort CSV: case_id, volume, pancreas_mask, tumor_mask");
  fit->add_option("--out", fa.out, "Model JSON path")->envname("PANCSYNTH_OUT");
  fa.tumor_type_opt = fit->add_option("--tumor-type", fa.tumor_type, "PDAC or Cyst");
  fa.radius_opt = fit->add_option("--radius", fa.radius, "Neighborhood radius (mm)");
  fit->add_option("--config", fa.config, "JSON config file")->envname("PANCSYNTH_CONFIG");
  fit->add_option("--jobs", fa.jobs, "Worker threads (0: all cores)")->envname("PANCSYNTH_JOBS");
  fit->add_flag("--print-config", fa.print_config, "Print the effective config and exit");

  SynthesizeArgs sa;
  auto* syn = app.add_subcommand("synthesize", "Insert synthetic tumors into healthy volumes");
  syn->add_option("--manifest", sa.manifest, "Healthy CSV: case_id, volume, pancreas_mask");
  syn->add_option("--model", sa.model, "Stats model JSON");
  syn->add_option("--out", sa.out, "Output directory")->envname("PANCSYNTH_OUT");
  syn->add_option("--config", sa.config, "Synthesis config JSON")->envname("PANCSYNTH_CONFIG");
  sa.seed_opt = syn->add_option("--seed", sa.seed, "Batch seed")->envname("PANCSYNTH_SEED");
  syn->add_option("--jobs", sa.jobs, "Worker threads (0: all cores)")->envname("PANCSYNTH_JOBS");
  syn->add_flag("--print-config", sa.print_config, "Print the effective config and exit");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "FROC, Dice and size-stratified sensitivity");
  ev->add_option("--pred", ea.pred, "Prediction CSV: case_id, mask, optional score_map");
  ev->add_option("--gt", ea.gt, "Ground-truth CSV: case_id, mask");
  ev->add_option("--out", ea.out, "Output directory")->envname("PANCSYNTH_OUT");
  ea.fp_opt = ev->add_option("--fp-targets", ea.fp_targets, "FP/subject targets")->delimiter(',');
  ea.bins_opt = ev->add_option("--radius-bins", ea.bins, "Radius bin edges (mm)")->delimiter(',');
  ea.conn_opt = ev->add_option("--connectivity", ea.connectivity, "6 or 26");
  ea.iou_opt = ev->add_option("--min-iou", ea.min_iou, "IoU needed for a hit (0: any overlap)");
  ea.unit_opt = ev->add_option("--sensitivity-unit", ea.unit, "lesion or subject");
  ev->add_option("--config", ea.config, "JSON config file")->envname("PANCSYNTH_CONFIG");
  ev->add_option("--jobs", ea.jobs, "Worker threads (0: all cores)")->envname("PANCSYNTH_JOBS");
  ev->add_flag("--print-config", ea.print_config, "Print the effective config and exit");

  ExportArgs xa;
  auto* ex = app.add_subcommand("turing-export", "Export the reader-study slice set");
  ex->add_option("--real", xa.real, "Real-tumor CSV: case_id, volume, tumor_mask");
  ex->add_option("--synth", xa.synth, "Synthetic-tumor CSV: case_id, volume, tumor_mask");
  ex->add_option("--out", xa.out, "Output directory")->envname("PANCSYNTH_OUT");
  xa.n_opt = ex->add_option("--n-per-class", xa.n_per_class, "Items per class");
  xa.seed_opt = ex->add_option("--seed", xa.seed, "Sampling seed")->envname("PANCSYNTH_SEED");
  xa.overlay_opt = ex->add_flag("--overlay", xa.overlay, "Tint the tumor mask on the slice");
  xa.policy_opt = ex->add_option("--slice-policy", xa.slice_policy, "max_area or random");
  xa.level_opt = ex->add_option("--window-level", xa.level, "Display window level (HU)");
  xa.width_opt = ex->add_option("--window-width", xa.width, "Display window width (HU)");
  ex->add_option("--config", xa.config, "JSON config file")->envname("PANCSYNTH_CONFIG");
  ex->add_option("--jobs", xa.jobs, "Worker threads (0: all cores)")->envname("PANCSYNTH_JOBS");
  ex->add_flag("--print-config", xa.print_config, "Print the effective config and exit");

  ServeArgs va;
  auto* sv = app.add_subcommand("serve", "Run the reader-study HTTP service");
  va.host_opt = sv->add_option("--host", va.host, "Bind address")->envname("PANCSYNTH_HOST");
  va.port_opt = sv->add_option("--port", va.port, "Port (0: any free port)")->envname("PANCSYNTH_PORT");
  va.data_opt =
      sv->add_option("--data-dir", va.data_dir, "Session log directory")->envname("PANCSYNTH_DATA_DIR");
  va.ui_opt = sv->add_option("--ui-dir", va.ui_dir, "Static reader UI bundle")->envname("PANCSYNTH_UI_DIR");
  sv->add_option("--config", va.config, "JSON config file")->envname("PANCSYNTH_CONFIG");
  sv->add_flag("--print-config", va.print_config, "Print the effective config and exit");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    app.parse(std::move(reversed));
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    err << app.help();
    return 2;
  }

  try {
    if (fit->parsed()) return fit_stats(fa, out);
    if (syn->parsed()) return synthesize(sa, out);
    if (ev->parsed()) return evaluate(ea, out);
    if (ex->parsed()) return turing_export(xa, out);
    return serve(va, out);
  } catch (const UsageError& e) {
    report_error(err, "usage", e.what());
    for (auto* s : app.get_subcommands()) err << s->help();
    return 2;
  } catch (const std::exception& e) {
    report_error(err, error_kind(e), e.what());
    return 1;
  }
}

int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace pancsynth::cli
