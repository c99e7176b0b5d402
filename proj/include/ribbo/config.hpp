#pragma once

#include <filesystem>

#include "json.hpp"
#include "ribbo/dataset.hpp"
#include "ribbo/model.hpp"
#include "ribbo/problems.hpp"

namespace ribbo {

using Json = nlohmann::json;

/// Reads and parses a JSON file; errors are reported as ConfigError with the
/// path and parser position.
Json parse_json_file(const std::filesystem::path& path);

Json search_space_to_json(const SearchSpace& s);
SearchSpace search_space_from_json(const Json& j);

Json rover_config_to_json(const RoverConfig& r);
RoverConfig rover_config_from_json(const Json& j);

/// Accepts either an explicit "space" object or "dim" plus the base
/// function's default box.
Json distribution_to_json(const TaskDistribution& d);
TaskDistribution distribution_from_json(const Json& j);

Json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const Json& j);

Json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j);

Json training_meta_to_json(const TrainingMeta& m);
TrainingMeta training_meta_from_json(const Json& j);

Json behavior_options_to_json(const BehaviorOptions& o);
BehaviorOptions behavior_options_from_json(const Json& j);

/// Fetches `key` from `j`, falling back to `fallback` when absent. A value of
/// the wrong type raises ConfigError naming the key.
template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

template <class T>
T require(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string("config field '") + key + "' is required");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace ribbo
