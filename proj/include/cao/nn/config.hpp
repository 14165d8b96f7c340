#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cao/nn/tensor.hpp"

namespace cao::nn {

/// CONV1D reads a pulse as 12 channels x L; CONV2D as 1 channel over a
/// 12 (lead) x L (time) plane.
enum class Variant { Conv1D, Conv2D };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::Conv1D;
  Index input_leads = 12;
  Index stem_channels = 16;
  std::vector<Index> block_channels{16, 32, 64};
  Index kernel_time = 7;
  Index kernel_leads = 3;  // lead extent of 2D kernels
  Index stem_stride = 2;   // time-axis stride of the stem conv
  Index stem_pool = 2;     // max-pool size after the stem (1 disables)
  Index fc_hidden = 64;
  Index n_outputs = 2;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index batch_size = 32;
  int epochs = 30;
  bool class_weighted = true;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

}  // namespace cao::nn
