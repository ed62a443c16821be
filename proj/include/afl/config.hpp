#pragma once

#include <filesystem>
#include <initializer_list>
#include <nlohmann/json.hpp>

#include "afl/losses.hpp"
#include "afl/synthgen.hpp"
#include "afl/trainer.hpp"

namespace afl {

// JSON forms of the configuration records. Parsing fills missing keys with
// defaults and rejects unknown keys with InvalidInput.

/// Throws InvalidInput unless j is an object whose keys are all in `keys`.
void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* where);

nlohmann::json to_json(const LossSpec& spec);
LossSpec loss_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

/// Reads a JSON document; throws DataError when missing, InvalidInput when malformed.
nlohmann::json read_json_file(const std::filesystem::path& file);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& file);

/// Shortest round-trip decimal form of v.
std::string format_double(double v);

}  // namespace afl
