/* Copyright 2026 The Copsel Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <bit>
#include <cstring>
#include <fstream>

#include "copsel/config.hpp"
#include "copsel/errors.hpp"
#include "copsel/networks.hpp"

namespace copsel {
namespace {

constexpr const char* kFormat = "copsel-checkpoint";
constexpr int kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

Json bn_json(const BatchNormState& bn) {
  return Json{{"running_mean", bn.running_mean},
              {"running_var", bn.running_var},
              {"momentum", bn.momentum},
              {"epsilon", bn.epsilon}};
}

BatchNormState bn_from_json(const Json& j) {
  BatchNormState bn;
  try {
    bn.running_mean = j.at("running_mean").get<std::vector<double>>();
    bn.running_var = j.at("running_var").get<std::vector<double>>();
    bn.momentum = j.at("momentum").get<double>();
    bn.epsilon = j.at("epsilon").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad batch-norm state: ") + e.what());
  }
  return bn;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const Json config = to_json(model.config);
  Json params = Json::array();
  std::size_t offset = 0;
  for (std::size_t k = 0; k < model.params.size(); ++k) {
    params.push_back(Json{{"name", model.names[k]},
                          {"shape", model.params[k].shape()},
                          {"offset", offset}});
    offset += model.params[k].size();
  }
  Json manifest{{"format", kFormat},
                {"version", kVersion},
                {"config", config},
                {"config_hash", config_hash(config)},
                {"dtype", "float64-le"},
                {"total_values", offset},
                {"params", params},
                {"batch_norm", {{"bn1", bn_json(model.bn1)},
                                {"bn2", bn_json(model.bn2)}}}};

  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw IoError("cannot write " + (dir / "params.bin").string());
  for (const Tensor& t : model.params) {
    bin.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!bin) throw IoError("write failed for " + (dir / "params.bin").string());

  std::ofstream man(dir / "manifest.json");
  if (!man) throw IoError("cannot write " + (dir / "manifest.json").string());
  man << manifest.dump(2) << '\n';
  if (!man) throw IoError("write failed for " + (dir / "manifest.json").string());
}

Model load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream man(dir / "manifest.json");
  if (!man) throw IoError("cannot read " + (dir / "manifest.json").string());
  Json manifest;
  try {
    manifest = Json::parse(man);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: manifest is not JSON: ") + e.what());
  }
  if (manifest.value("format", "") != kFormat ||
      manifest.value("version", 0) != kVersion) {
    throw FormatError("checkpoint: unsupported format in " + dir.string());
  }
  const Json& config = manifest.at("config");
  if (manifest.value("config_hash", "") != config_hash(config)) {
    throw FormatError("checkpoint: config hash mismatch in " + dir.string());
  }

  Model model;
  model.config = model_config_from_json(config);
  model.config.validate();
  std::ifstream bin(dir / "params.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw IoError("cannot read " + (dir / "params.bin").string());
  const auto bytes = static_cast<std::size_t>(bin.tellg());
  const std::size_t total = manifest.at("total_values").get<std::size_t>();
  if (bytes != total * sizeof(double)) {
    throw FormatError("checkpoint: params.bin holds " + std::to_string(bytes) +
                      " bytes, manifest expects " +
                      std::to_string(total * sizeof(double)));
  }
  bin.seekg(0);
  for (const Json& p : manifest.at("params")) {
    Tensor t(p.at("shape").get<Shape>());
    bin.seekg(static_cast<std::streamoff>(p.at("offset").get<std::size_t>() *
                                          sizeof(double)));
    bin.read(reinterpret_cast<char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!bin) throw FormatError("checkpoint: truncated parameter data");
    model.names.push_back(p.at("name").get<std::string>());
    model.params.push_back(std::move(t));
  }
  model.bn1 = bn_from_json(manifest.at("batch_norm").at("bn1"));
  model.bn2 = bn_from_json(manifest.at("batch_norm").at("bn2"));

  // Shapes must match a fresh model with this config.
  Rng rng(0);
  const Model fresh = init_model(model.config, rng);
  if (fresh.names != model.names) {
    throw FormatError("checkpoint: parameter names do not match the config");
  }
  for (std::size_t k = 0; k < fresh.params.size(); ++k) {
    if (fresh.params[k].shape() != model.params[k].shape()) {
      throw FormatError("checkpoint: parameter '" + model.names[k] +
                        "' has shape " + shape_string(model.params[k].shape()) +
                        ", config implies " +
                        shape_string(fresh.params[k].shape()));
    }
  }
  return model;
}

}  // namespace copsel
