#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "cao/binary_io.hpp"
#include "cao/nn/model.hpp"

namespace cao::nn {

/// `model.bin`, little-endian:
///   "CAOM" | version u32 | config JSON (u32 length + bytes) | trained u8 |
///   tensor count u32 | per tensor: name (u32 length + bytes), rank u32,
///   dims u64 x rank, f64 data.
inline constexpr std::uint32_t kModelFileVersion = 1;

template <typename Scalar>
void save_model(const std::filesystem::path& path, const Model<Scalar>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("CAOM", 4);
  binio::put<std::uint32_t>(out, kModelFileVersion);
  binio::put_string(out, model.config().to_json().dump());
  binio::put<std::uint8_t>(out, model.trained() ? 1 : 0);
  const auto state = model.state();
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(state.size()));
  for (const Parameter<Scalar>* p : state) {
    binio::put_string(out, p->name);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (Index d : p->value.shape()) binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < p->value.size(); ++i) binio::put<double>(out, static_cast<double>(p->value.values()[i]));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Rebuilds the model from the stored config and checks every stored tensor
/// against the shapes that config implies.
template <typename Scalar = double>
Model<Scalar> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    binio::expect_magic(in, "CAOM", path.string());
    const auto version = binio::get<std::uint32_t>(in);
    if (version != kModelFileVersion) throw std::runtime_error("unsupported version " + std::to_string(version));
    Model<Scalar> model(ModelConfig::from_json(nlohmann::json::parse(binio::get_string(in))));
    const bool trained = binio::get<std::uint8_t>(in) != 0;

    std::map<std::string, Parameter<Scalar>*> by_name;
    for (Parameter<Scalar>* p : model.state()) by_name[p->name] = p;
    const auto count = binio::get<std::uint32_t>(in);
    if (count != by_name.size())
      throw std::runtime_error("tensor count " + std::to_string(count) + " does not match config (" +
                               std::to_string(by_name.size()) + ")");
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::string name = binio::get_string(in);
      auto it = by_name.find(name);
      if (it == by_name.end()) throw std::runtime_error("unexpected tensor '" + name + "'");
      const auto rank = binio::get<std::uint32_t>(in);
      if (rank > 8) throw std::runtime_error("tensor '" + name + "' has implausible rank");
      std::vector<Index> shape(rank);
      for (auto& d : shape) d = static_cast<Index>(binio::get<std::uint64_t>(in));
      Parameter<Scalar>& p = *it->second;
      if (shape != p.value.shape())
        throw std::runtime_error("tensor '" + name + "' has shape " + shape_string(shape) + ", config expects " +
                                 p.value.shape_string());
      for (Index i = 0; i < p.value.size(); ++i) p.value.values()[i] = static_cast<Scalar>(binio::get<double>(in));
      by_name.erase(it);
    }
    model.set_trained(trained);
    return model;
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace cao::nn
