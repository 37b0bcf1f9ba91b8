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

#include "copsel/config.hpp"

#include <cstdio>

#include "copsel/errors.hpp"

namespace copsel {
namespace {

template <typename E, std::size_t N>
E parse_enum(const Json& j, const char* key,
             const std::pair<const char*, E> (&table)[N]) {
  if (!j.is_string()) {
    throw FormatError(std::string("config: '") + key + "' must be a string");
  }
  const std::string s = j.get<std::string>();
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  std::string allowed;
  for (const auto& [name, value] : table) {
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  throw FormatError(std::string("config: '") + key + "' = '" + s +
                    "', expected " + allowed);
}

constexpr std::pair<const char*, SelectionMode> kModes[] = {
    {"binary", SelectionMode::kBinary}, {"topk", SelectionMode::kTopK}};
constexpr std::pair<const char*, Activation> kActivations[] = {
    {"relu", Activation::kRelu}, {"selu", Activation::kSelu}};
constexpr std::pair<const char*, ScoreHead> kHeads[] = {
    {"probability", ScoreHead::kProbability}, {"sigmoid", ScoreHead::kSigmoid}};
constexpr std::pair<const char*, RankMode> kRanks[] = {
    {"low", RankMode::kLow}, {"full", RankMode::kFull}};
constexpr std::pair<const char*, MaskEstimator> kEstimators[] = {
    {"soft", MaskEstimator::kSoft}, {"straight_through", MaskEstimator::kStraightThrough}};
constexpr std::pair<const char*, NoisePath> kPaths[] = {
    {"cholesky", NoisePath::kCholesky}, {"factor", NoisePath::kFactor}};

template <typename E, std::size_t N>
const char* enum_name(E v, const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: bad value for '") + key +
                      "': " + e.what());
  }
}

void require_object(const Json& j, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + " must be a JSON object");
}

}  // namespace

const char* to_string(SelectionMode m) { return enum_name(m, kModes); }
const char* to_string(Activation a) { return enum_name(a, kActivations); }
const char* to_string(ScoreHead h) { return enum_name(h, kHeads); }
const char* to_string(RankMode r) { return enum_name(r, kRanks); }
const char* to_string(NoisePath n) { return enum_name(n, kPaths); }
const char* to_string(MaskEstimator e) { return enum_name(e, kEstimators); }

Json to_json(const SamplerParams& p) {
  return Json{{"t", p.temperature}, {"delta", p.delta}, {"k", p.k},
              {"lambda", p.lambda}};
}

Json to_json(const ModelConfig& c) {
  return Json{{"mode", to_string(c.mode)},
              {"d", c.d},
              {"n_classes", c.n_classes},
              {"h_c", c.h_c},
              {"h_p", c.h_p},
              {"activation", to_string(c.activation)},
              {"score_head", to_string(c.score_head)},
              {"rank_mode", to_string(c.rank)},
              {"p", c.rank_p},
              {"tau", c.tau},
              {"nola", c.nola},
              {"noise_path", to_string(c.noise_path)},
              {"mask_estimator", to_string(c.estimator)},
              {"sampler", to_json(c.sampler)}};
}

Json to_json(const TrainingConfig& c) {
  return Json{{"model", to_json(c.model)},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed}};
}

SamplerParams sampler_params_from_json(const Json& j, SamplerParams base) {
  require_object(j, "sampler");
  read(j, "t", base.temperature);
  read(j, "delta", base.delta);
  read(j, "k", base.k);
  read(j, "lambda", base.lambda);
  return base;
}

ModelConfig model_config_from_json(const Json& j, ModelConfig base) {
  require_object(j, "model config");
  if (j.contains("mode")) base.mode = parse_enum(j["mode"], "mode", kModes);
  read(j, "d", base.d);
  read(j, "n_classes", base.n_classes);
  read(j, "h_c", base.h_c);
  read(j, "h_p", base.h_p);
  if (j.contains("activation")) {
    base.activation = parse_enum(j["activation"], "activation", kActivations);
  }
  if (j.contains("score_head")) {
    base.score_head = parse_enum(j["score_head"], "score_head", kHeads);
  }
  if (j.contains("rank_mode")) {
    base.rank = parse_enum(j["rank_mode"], "rank_mode", kRanks);
  }
  read(j, "p", base.rank_p);
  read(j, "tau", base.tau);
  read(j, "nola", base.nola);
  if (j.contains("noise_path")) {
    base.noise_path = parse_enum(j["noise_path"], "noise_path", kPaths);
  }
  if (j.contains("mask_estimator")) {
    base.estimator = parse_enum(j["mask_estimator"], "mask_estimator", kEstimators);
  }
  if (j.contains("sampler")) {
    base.sampler = sampler_params_from_json(j["sampler"], base.sampler);
  }
  return base;
}

TrainingConfig training_config_from_json(const Json& j, TrainingConfig base) {
  require_object(j, "training config");
  if (j.contains("model")) base.model = model_config_from_json(j["model"], base.model);
  read(j, "learning_rate", base.learning_rate);
  read(j, "batch_size", base.batch_size);
  read(j, "epochs", base.epochs);
  read(j, "weight_decay", base.weight_decay);
  read(j, "seed", base.seed);
  return base;
}

Json to_json(const SyntheticSpec& s) {
  return Json{{"family", family_name(s.family)},
              {"d", s.d},
              {"correlated", s.correlated},
              {"n_train", s.n_train},
              {"n_test", s.n_test},
              {"seed", s.seed},
              {"conventional_sign", s.conventional_sign},
              {"switch_relevant", s.switch_relevant}};
}

SyntheticSpec synthetic_spec_from_json(const Json& j, SyntheticSpec base) {
  require_object(j, "synthetic spec");
  if (j.contains("family")) {
    if (!j["family"].is_string()) throw FormatError("config: 'family' must be a string");
    base.family = parse_family(j["family"].get<std::string>());
  }
  read(j, "d", base.d);
  read(j, "correlated", base.correlated);
  read(j, "n_train", base.n_train);
  read(j, "n_test", base.n_test);
  read(j, "seed", base.seed);
  read(j, "conventional_sign", base.conventional_sign);
  read(j, "switch_relevant", base.switch_relevant);
  return base;
}

std::string config_hash(const Json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace copsel
