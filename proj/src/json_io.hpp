#pragma once

#include <json.hpp>

#include "tsf/models.hpp"

namespace tsf {

nlohmann::json model_config_to_json(const ModelConfig& config);
// Missing keys fall back to `defaults`.
ModelConfig model_config_from_json(const nlohmann::json& j, const ModelConfig& defaults = {});

}  // namespace tsf
