#include "dagerc/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dagerc {

using nlohmann::json;

void save_checkpoint(const Model& model, const std::string& path) {
  json j;
  j["format"] = "dagerc-checkpoint";
  j["version"] = 1;
  j["config"] = {{"d_feat", model.config.d_feat},
                 {"d_h", model.config.d_h},
                 {"n_layers", model.config.n_layers},
                 {"n_classes", model.config.n_classes},
                 {"dropout", model.config.dropout},
                 {"use_relation_transform", model.config.ablation.use_relation_transform},
                 {"use_nodal_unit", model.config.ablation.use_nodal_unit},
                 {"use_contextual_unit", model.config.ablation.use_contextual_unit},
                 {"seed", model.config.seed}};
  auto params = json::array();
  for (const auto& p : model.store->all())
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows},
                      {"cols", p->value.cols},
                      {"data", p->value.data}});
  j["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump() << '\n';
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": malformed checkpoint: " + e.what());
  }
  if (j.value("format", "") != "dagerc-checkpoint")
    throw std::runtime_error(path + ": not a checkpoint file");

  const json& c = j.at("config");
  ModelConfig config;
  config.d_feat = c.at("d_feat").get<int>();
  config.d_h = c.at("d_h").get<int>();
  config.n_layers = c.at("n_layers").get<int>();
  config.n_classes = c.at("n_classes").get<int>();
  config.dropout = c.at("dropout").get<double>();
  config.ablation.use_relation_transform = c.at("use_relation_transform").get<bool>();
  config.ablation.use_nodal_unit = c.at("use_nodal_unit").get<bool>();
  config.ablation.use_contextual_unit = c.at("use_contextual_unit").get<bool>();
  config.seed = c.at("seed").get<std::uint64_t>();

  Model model = init_model(config);
  for (const json& jp : j.at("params")) {
    Parameter* p = model.store->find(jp.at("name").get<std::string>());
    if (!p) throw std::runtime_error(path + ": unknown parameter " + jp.at("name").dump());
    if (p->value.rows != jp.at("rows").get<int>() || p->value.cols != jp.at("cols").get<int>())
      throw std::runtime_error(path + ": shape mismatch for " + p->name);
    std::vector<double> data = jp.at("data").get<std::vector<double>>();
    if (data.size() != p->value.data.size())
      throw std::runtime_error(path + ": size mismatch for " + p->name);
    for (double v : data)
      if (!std::isfinite(v)) throw std::runtime_error(path + ": non-finite value in " + p->name);
    p->value.data = std::move(data);
  }
  return model;
}

}  // namespace dagerc
