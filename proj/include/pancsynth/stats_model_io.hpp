#pragma once

#include <filesystem>

#include <json.hpp>

#include "pancsynth/cohort_stats.hpp"

namespace pancsynth {

/// Version of the stats-model JSON layout (see README).
inline constexpr int kStatsModelSchemaVersion = 1;

nlohmann::json stats_model_to_json(const TumorStatsModel& model);
/// Throws InvariantError naming the missing or invalid field.
TumorStatsModel stats_model_from_json(const nlohmann::json& j);

void save_stats_model(const TumorStatsModel& model, const std::filesystem::path& path);
TumorStatsModel load_stats_model(const std::filesystem::path& path);

namespace json_util {

/// Looks up `key` in `obj`; throws InvariantError("missing field 'path.key'").
const nlohmann::json& field(const nlohmann::json& obj, const std::string& key,
                            const std::string& path = "");
double number(const nlohmann::json& obj, const std::string& key, const std::string& path = "");

nlohmann::json read_file(const std::filesystem::path& path);
void write_file(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace json_util

}  // namespace pancsynth
