#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "tsf/error.hpp"
#include "tsf/models.hpp"

namespace tsf {

using nlohmann::json;

json model_config_to_json(const ModelConfig& c) {
  return json{{"variant", variant_name(c.variant)},
              {"input_len", c.input_len},
              {"horizon", c.horizon},
              {"channels", c.channels},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"ffn_dim", c.ffn_dim},
              {"ma_kernel", c.ma_kernel},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j, const ModelConfig& defaults) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c = defaults;
  try {
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    c.input_len = j.value("input_len", c.input_len);
    c.horizon = j.value("horizon", c.horizon);
    c.channels = j.value("channels", c.channels);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.ma_kernel = j.value("ma_kernel", c.ma_kernel);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  return c;
}

std::string checkpoint_to_string(const Forecaster& model) {
  json params = json::object();
  for (const auto& p : model.parameters()) {
    params[p.name] = json{{"shape", p.value.shape()},
                          {"data", std::vector<double>(p.value.data().begin(), p.value.data().end())}};
  }
  json doc{{"format", "tsf-checkpoint"}, {"version", 1}, {"config", model_config_to_json(model.config())},
           {"parameters", std::move(params)}};
  return doc.dump(1);
}

Forecaster checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (doc.value("format", "") != "tsf-checkpoint") throw DataError("not a tsf checkpoint");
  Forecaster model(model_config_from_json(doc.at("config")));
  const json& params = doc.at("parameters");
  if (params.size() != model.parameters().size()) {
    throw DataError("checkpoint holds " + std::to_string(params.size()) + " parameters, model expects " +
                    std::to_string(model.parameters().size()));
  }
  for (auto& p : model.parameters()) {
    if (!params.contains(p.name)) throw DataError("checkpoint is missing parameter '" + p.name + "'");
    const json& entry = params.at(p.name);
    Tensor value(entry.at("shape").get<Shape>(), entry.at("data").get<std::vector<double>>());
    if (value.shape() != p.value.shape()) {
      throw DimensionError("checkpoint parameter '" + p.name + "' has shape " + shape_to_string(value.shape()) +
                           ", expected " + shape_to_string(p.value.shape()));
    }
    p.value = std::move(value);
  }
  return model;
}

void save_checkpoint(const Forecaster& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_to_string(model) << '\n';
}

Forecaster load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace tsf
