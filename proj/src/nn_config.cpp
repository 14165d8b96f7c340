#include "cao/nn/config.hpp"

#include <stdexcept>
#include <string>

namespace cao::nn {

std::string_view to_string(Variant v) { return v == Variant::Conv1D ? "1d" : "2d"; }

Variant variant_from_string(std::string_view name) {
  if (name == "1d" || name == "CONV1D") return Variant::Conv1D;
  if (name == "2d" || name == "CONV2D") return Variant::Conv2D;
  throw std::invalid_argument("unknown CNN variant '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (block_channels.empty()) throw std::invalid_argument("model needs at least one residual block");
  if (n_outputs != 2) throw std::invalid_argument("stage heads have exactly 2 outputs");
  if (input_leads < 1 || stem_channels < 1 || fc_hidden < 1 || kernel_time < 1 || kernel_leads < 1)
    throw std::invalid_argument("model dimensions must be positive");
  if (stem_stride < 1 || stem_pool < 1) throw std::invalid_argument("stem stride and pool must be >= 1");
  for (Index c : block_channels)
    if (c < 1) throw std::invalid_argument("block channel counts must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", std::string(to_string(variant))},
          {"input_leads", input_leads},
          {"stem_channels", stem_channels},
          {"block_channels", block_channels},
          {"kernel_time", kernel_time},
          {"kernel_leads", kernel_leads},
          {"stem_stride", stem_stride},
          {"stem_pool", stem_pool},
          {"fc_hidden", fc_hidden},
          {"n_outputs", n_outputs}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.input_leads = j.at("input_leads").get<Index>();
  c.stem_channels = j.at("stem_channels").get<Index>();
  c.block_channels = j.at("block_channels").get<std::vector<Index>>();
  c.kernel_time = j.at("kernel_time").get<Index>();
  c.kernel_leads = j.at("kernel_leads").get<Index>();
  c.stem_stride = j.at("stem_stride").get<Index>();
  c.stem_pool = j.at("stem_pool").get<Index>();
  c.fc_hidden = j.at("fc_hidden").get<Index>();
  c.n_outputs = j.at("n_outputs").get<Index>();
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"optimizer", "adam"},      {"learning_rate", learning_rate}, {"beta1", beta1},
          {"beta2", beta2},           {"epsilon", epsilon},             {"batch_size", batch_size},
          {"epochs", epochs},         {"class_weighted", class_weighted}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.batch_size = j.at("batch_size").get<Index>();
  c.epochs = j.at("epochs").get<int>();
  c.class_weighted = j.at("class_weighted").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

}  // namespace cao::nn
