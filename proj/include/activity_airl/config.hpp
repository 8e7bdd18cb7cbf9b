#pragma once

// Run configuration: one JSON document with a documented default for every key.
// User files and dotted command-line overrides are merged on top; unknown keys
// and type changes are rejected with ConfigError.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "activity_airl/airl.hpp"
#include "activity_airl/data_io.hpp"
#include "activity_airl/distill.hpp"

namespace activity_airl::config {

using Json = nlohmann::ordered_json;

Json defaults();

/// Merges `user` into `base`, rejecting keys absent from base and type changes.
void merge(Json& base, const Json& user);

/// Defaults merged with the file's contents.
Json load(const std::filesystem::path& path);

/// Sets a dotted key ("train.ppo.clip") from command-line text. The text is read as
/// JSON when the current value is not a string.
void apply_override(Json& cfg, const std::string& dotted_key, const std::string& value);

nn::ArchitectureConfig architecture(const Json& cfg);
data::SynthConfig synth(const Json& cfg);
airl::TrainConfig train(const Json& cfg);
airl::BcConfig bc(const Json& cfg);
distill::FitOptions surrogate(const Json& cfg, double alpha);
std::uint64_t seed(const Json& cfg);
int jobs(const Json& cfg);

}  // namespace activity_airl::config
