#include "pancsynth/synth_io.hpp"

#include <cmath>
#include <set>

namespace pancsynth {

using nlohmann::json;

namespace {

double require_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw InvariantError("config field '" + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

json synthesis_config_to_json(const SynthesisConfig& cfg) {
  json strata = json::array();
  for (const auto& s : cfg.strata)
    strata.push_back({{"upper_bound", std::isinf(s.upper_bound) ? json(nullptr) : json(s.upper_bound)},
                      {"weight", s.weight}});
  return {
      {"strata", strata},
      {"axis_ratio_range", {cfg.axis_ratio_range[0], cfg.axis_ratio_range[1]}},
      {"elastic_sigma_mm", cfg.elastic_sigma_mm},
      {"elastic_magnitude_mm", cfg.elastic_magnitude_mm},
      {"texture_sigma_hu", cfg.texture_sigma_hu},
      {"blur_sigma_mm", cfg.blur_sigma_mm},
      {"core_threshold", cfg.core_threshold},
      {"tumors_per_volume", cfg.tumors_per_volume},
      {"seed", cfg.seed},
      {"variants_per_case", cfg.variants_per_case},
      {"allow_overlap", cfg.allow_overlap},
  };
}

SynthesisConfig synthesis_config_from_json(const json& j, const SynthesisConfig& base) {
  if (!j.is_object()) throw InvariantError("synthesis config must be a JSON object");
  static const std::set<std::string> known{
      "strata",         "axis_ratio_range", "elastic_sigma_mm", "elastic_magnitude_mm",
      "texture_sigma_hu", "blur_sigma_mm",  "core_threshold",   "tumors_per_volume",
      "seed",           "variants_per_case", "allow_overlap"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw InvariantError("unknown synthesis config field '" + key + "'");

  SynthesisConfig cfg = base;
  if (j.contains("strata")) {
    const auto& arr = j.at("strata");
    if (!arr.is_array()) throw InvariantError("config field 'strata' must be an array");
    cfg.strata.clear();
    for (const auto& s : arr) {
      if (!s.is_object() || !s.contains("upper_bound") || !s.contains("weight"))
        throw InvariantError("each stratum needs 'upper_bound' and 'weight'");
      Stratum st;
      st.upper_bound = s.at("upper_bound").is_null()
                           ? std::numeric_limits<double>::infinity()
                           : require_number(s.at("upper_bound"), "strata.upper_bound");
      st.weight = require_number(s.at("weight"), "strata.weight");
      cfg.strata.push_back(st);
    }
  }
  if (j.contains("axis_ratio_range")) {
    const auto& r = j.at("axis_ratio_range");
    if (!r.is_array() || r.size() != 2)
      throw InvariantError("config field 'axis_ratio_range' must be [lo, hi]");
    cfg.axis_ratio_range = {require_number(r[0], "axis_ratio_range"),
                            require_number(r[1], "axis_ratio_range")};
  }
  auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = require_number(j.at(key), key);
  };
  num("elastic_sigma_mm", cfg.elastic_sigma_mm);
  num("elastic_magnitude_mm", cfg.elastic_magnitude_mm);
  num("texture_sigma_hu", cfg.texture_sigma_hu);
  num("blur_sigma_mm", cfg.blur_sigma_mm);
  num("core_threshold", cfg.core_threshold);
  auto integer = [&](const char* key, int& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer()) throw InvariantError(std::string("config field '") + key + "' must be an integer");
    out = j.at(key).get<int>();
  };
  integer("tumors_per_volume", cfg.tumors_per_volume);
  integer("variants_per_case", cfg.variants_per_case);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned())
      throw InvariantError("config field 'seed' must be a non-negative integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("allow_overlap")) {
    if (!j.at("allow_overlap").is_boolean())
      throw InvariantError("config field 'allow_overlap' must be a boolean");
    cfg.allow_overlap = j.at("allow_overlap").get<bool>();
  }
  cfg.validate();
  return cfg;
}

json provenance_to_json(const SynthesisProvenance& p) {
  json tumors = json::array();
  for (const auto& t : p.tumors) {
    tumors.push_back({
        {"label", t.label},
        {"stratum", t.stratum},
        {"size_ratio", t.size_ratio},
        {"semi_axes_mm", t.semi_axes_mm},
        {"raster_voxels", t.raster_voxels},
        {"subvoxel", t.subvoxel},
        {"deformed_voxels", t.deformed_voxels},
        {"center_voxel", t.center},
        {"position_attempts", t.position_attempts},
        {"neighborhood_median_hu", t.neighborhood_median},
        {"neighborhood_radius_mm", t.neighborhood_radius_mm},
        {"neighborhood_voxels", t.neighborhood_voxels},
        {"delta_i_hu", t.delta_i},
        {"epsilon_hu", t.epsilon},
        {"tumor_mean_hu", t.tumor_mean_hu},
        {"mask_voxels", t.mask_voxels},
    });
  }
  return {{"seed", p.seed},
          {"requested_tumors", p.requested_tumors},
          {"placed_tumors", p.placed_tumors},
          {"count_reduced", p.count_reduced},
          {"tumors", tumors}};
}

}  // namespace pancsynth
