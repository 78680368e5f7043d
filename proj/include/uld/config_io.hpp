#pragma once

#include <string>

#include "json.hpp"
#include "uld/data.hpp"
#include "uld/network.hpp"
#include "uld/training.hpp"

namespace uld {

// JSON field names follow the struct members; unknown keys are rejected so
// config typos fail loudly. Parse errors throw ConfigError, file errors
// IoError.

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);

nlohmann::json load_json_file(const std::string& path);

// train.json carries {"model": {...}, "train": {...}}; both sections are
// optional and default-constructed when absent.
struct TrainFileConfig {
    ModelConfig model;
    TrainConfig train;
};
TrainFileConfig train_file_from_json(const nlohmann::json& j);

}  // namespace uld
