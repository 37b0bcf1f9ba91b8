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

// JSON forms of the model and training configurations. Enum fields are
// written as lowercase strings; missing keys keep their defaults.

#ifndef COPSEL_CONFIG_HPP_
#define COPSEL_CONFIG_HPP_

#include <cstdint>
#include <string>

#include "json.hpp"
#include "copsel/networks.hpp"
#include "copsel/synthetic.hpp"

namespace copsel {

using Json = nlohmann::ordered_json;

Json to_json(const SamplerParams& p);
Json to_json(const ModelConfig& c);
Json to_json(const TrainingConfig& c);
Json to_json(const SyntheticSpec& s);

// Throw FormatError on unknown enum strings or wrong value types.
SamplerParams sampler_params_from_json(const Json& j, SamplerParams base = {});
ModelConfig model_config_from_json(const Json& j, ModelConfig base = {});
TrainingConfig training_config_from_json(const Json& j, TrainingConfig base = {});
SyntheticSpec synthetic_spec_from_json(const Json& j, SyntheticSpec base = {});

const char* to_string(SelectionMode m);
const char* to_string(Activation a);
const char* to_string(ScoreHead h);
const char* to_string(RankMode r);
const char* to_string(NoisePath n);
const char* to_string(MaskEstimator e);

// FNV-1a over the compact dump; identifies a configuration in manifests.
std::string config_hash(const Json& j);

}  // namespace copsel

#endif  // COPSEL_CONFIG_HPP_
