#include "pancsynth/stats_model_io.hpp"

#include <fstream>

namespace pancsynth {

using nlohmann::json;

namespace json_util {

const json& field(const json& obj, const std::string& key, const std::string& path) {
  const std::string full = path.empty() ? key : path + "." + key;
  if (!obj.is_object()) throw InvariantError("expected an object at '" + path + "'");
  const auto it = obj.find(key);
  if (it == obj.end()) throw InvariantError("missing field '" + full + "'");
  return *it;
}

double number(const json& obj, const std::string& key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_number())
    throw InvariantError("field '" + (path.empty() ? key : path + "." + key) +
                         "' must be a number");
  return v.get<double>();
}

json read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write error in " + path.string());
}

}  // namespace json_util

json stats_model_to_json(const TumorStatsModel& m) {
  return {
      {"schema_version", kStatsModelSchemaVersion},
      {"tumor_type", to_string(m.tumor_type)},
      {"n_cases", m.n_cases},
      {"neighborhood_radius_mm", m.neighborhood_radius_mm},
      {"size_ratio",
       {{"location", m.size_ratio_dist.location},
        {"scale", m.size_ratio_dist.scale},
        {"shape", m.size_ratio_dist.shape}}},
      {"intensity_regression",
       {{"alpha", m.intensity_regression.alpha},
        {"beta", m.intensity_regression.beta},
        {"sigma_eps", m.intensity_regression.sigma_eps}}},
      {"offset_z_hist",
       {{"edges", m.offset_z_hist.edges}, {"probabilities", m.offset_z_hist.probabilities}}},
  };
}

TumorStatsModel stats_model_from_json(const json& j) {
  using json_util::field;
  using json_util::number;
  const auto& version = field(j, "schema_version");
  if (!version.is_number_integer() || version.get<int>() != kStatsModelSchemaVersion)
    throw InvariantError("unsupported stats model schema_version (expected " +
                         std::to_string(kStatsModelSchemaVersion) + ")");

  TumorStatsModel m;
  const auto& type = field(j, "tumor_type");
  if (!type.is_string()) throw InvariantError("field 'tumor_type' must be a string");
  m.tumor_type = parse_tumor_type(type.get<std::string>());
  const auto& n = field(j, "n_cases");
  if (!n.is_number_unsigned()) throw InvariantError("field 'n_cases' must be a non-negative integer");
  m.n_cases = n.get<std::size_t>();
  m.neighborhood_radius_mm = number(j, "neighborhood_radius_mm");

  const auto& sr = field(j, "size_ratio");
  m.size_ratio_dist = {number(sr, "location", "size_ratio"), number(sr, "scale", "size_ratio"),
                       number(sr, "shape", "size_ratio")};
  const auto& reg = field(j, "intensity_regression");
  m.intensity_regression = {number(reg, "alpha", "intensity_regression"),
                            number(reg, "beta", "intensity_regression"),
                            number(reg, "sigma_eps", "intensity_regression")};

  const auto& hist = field(j, "offset_z_hist");
  const auto& edges = field(hist, "edges", "offset_z_hist");
  const auto& probs = field(hist, "probabilities", "offset_z_hist");
  try {
    m.offset_z_hist.edges = edges.get<std::vector<double>>();
    m.offset_z_hist.probabilities = probs.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw InvariantError("offset_z_hist edges/probabilities must be arrays of numbers");
  }
  m.validate();
  return m;
}

void save_stats_model(const TumorStatsModel& model, const std::filesystem::path& path) {
  model.validate();
  json_util::write_file(stats_model_to_json(model), path);
}

TumorStatsModel load_stats_model(const std::filesystem::path& path) {
  return stats_model_from_json(json_util::read_file(path));
}

}  // namespace pancsynth
