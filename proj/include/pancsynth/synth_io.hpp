#pragma once

#include <json.hpp>

#include "pancsynth/synth.hpp"

namespace pancsynth {

/// Unbounded strata are written as "upper_bound": null.
nlohmann::json synthesis_config_to_json(const SynthesisConfig& cfg);

/// Starts from `base` and overrides every key present in `j`. Unknown keys
/// and invalid values throw InvariantError.
SynthesisConfig synthesis_config_from_json(const nlohmann::json& j,
                                           const SynthesisConfig& base = {});

nlohmann::json provenance_to_json(const SynthesisProvenance& p);

}  // namespace pancsynth
