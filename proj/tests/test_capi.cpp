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

// Exercises the shared library through its C interface only.

#include <cmath>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "copsel/copsel.h"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Takes ownership of a string returned by the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  copsel_free_string(s);
  return out;
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("copsel_test_capi_" + name);
  fs::remove_all(dir);
  return dir;
}

json tiny_config(const fs::path& out) {
  char* raw = nullptr;
  REQUIRE(copsel_preset("syn1-11d", &raw) == COPSEL_OK);
  json c = json::parse(take(raw));
  c["data"]["synthetic"]["n_train"] = 300;
  c["data"]["synthetic"]["n_test"] = 100;
  c["training"]["epochs"] = 1;
  c["training"]["batch_size"] = 100;
  c["training"]["model"]["h_c"] = 6;
  c["training"]["model"]["h_p"] = 6;
  c["sigma_rows"] = 10;
  c["monitor_rows"] = 20;
  c["out_dir"] = out.string();
  return c;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(copsel_version()).size() > 0);
  CHECK(std::string(copsel_status_name(COPSEL_OK)) == "ok");
  CHECK(std::string(copsel_status_name(COPSEL_ERR_FORMAT)) == "format");
  copsel_free_string(nullptr);
}

TEST_CASE("errors map to codes and leave a message") {
  char* out = nullptr;
  CHECK(copsel_preset(nullptr, &out) == COPSEL_ERR_ARGUMENT);
  CHECK(copsel_preset("syn1-11d", nullptr) == COPSEL_ERR_ARGUMENT);
  CHECK(copsel_preset("nope", &out) == COPSEL_ERR_DOMAIN);
  CHECK(std::string(copsel_last_error()).find("nope") != std::string::npos);
  CHECK(out == nullptr);
  CHECK(copsel_normalize_config("{not json", &out) == COPSEL_ERR_FORMAT);
  CHECK(copsel_normalize_config(R"({"data": {"synthetic": {"d": 10}}})", &out) ==
        COPSEL_ERR_DOMAIN);
  copsel_model* m = nullptr;
  CHECK(copsel_model_load("/nonexistent/checkpoint", &m) == COPSEL_ERR_IO);
  CHECK(m == nullptr);
  copsel_dataset* ds = nullptr;
  CHECK(copsel_dataset_load_csv("/nonexistent.csv", &ds) == COPSEL_ERR_IO);
  int passed = 0;
  CHECK(copsel_verify("theorem9", nullptr, &out, &passed) == COPSEL_ERR_DOMAIN);

  // Success clears nothing, but the message is per thread.
  std::string other;
  std::thread([&] { other = copsel_last_error(); }).join();
  CHECK(other.empty());
}

TEST_CASE("presets and normalization") {
  char* raw = nullptr;
  REQUIRE(copsel_preset_names(&raw) == COPSEL_OK);
  const json names = json::parse(take(raw));
  CHECK(names.size() == 20);
  REQUIRE(copsel_normalize_config("{}", &raw) == COPSEL_OK);
  const json normal = json::parse(take(raw));
  REQUIRE(copsel_normalize_config(normal.dump().c_str(), &raw) == COPSEL_OK);
  CHECK(json::parse(take(raw)) == normal);
}

TEST_CASE("generate, train, load, evaluate, infer, export") {
  const fs::path dir = scratch("pipeline");
  const json spec{{"family", "syn1"}, {"n_train", 50}, {"n_test", 30}, {"seed", 4}};
  REQUIRE(copsel_generate(spec.dump().c_str(), dir.string().c_str()) == COPSEL_OK);
  copsel_dataset* ds = nullptr;
  REQUIRE(copsel_dataset_load_csv((dir / "test.csv").string().c_str(), &ds) == COPSEL_OK);
  size_t rows = 0, dim = 0, classes = 0;
  int truth = 0;
  REQUIRE(copsel_dataset_shape(ds, &rows, &dim, &classes, &truth) == COPSEL_OK);
  CHECK(rows == 30);
  CHECK(dim == 11);
  CHECK(classes == 2);
  CHECK(truth == 1);

  std::vector<std::string> lines;
  auto collect = [](const char* line, void* user) {
    static_cast<std::vector<std::string>*>(user)->push_back(line);
  };
  const json config = tiny_config(dir / "run");
  char* raw = nullptr;
  REQUIRE(copsel_train(config.dump().c_str(), collect, &lines, &raw) == COPSEL_OK);
  const json result = json::parse(take(raw));
  CHECK(!lines.empty());
  CHECK(result["test"]["n"] == 100);

  copsel_model* model = nullptr;
  REQUIRE(copsel_model_load(result["checkpoint"].get<std::string>().c_str(), &model) ==
          COPSEL_OK);
  REQUIRE(copsel_model_config(model, &raw) == COPSEL_OK);
  CHECK(json::parse(take(raw))["d"] == 11);
  REQUIRE(copsel_evaluate(model, ds, &raw) == COPSEL_OK);
  const json report = json::parse(take(raw));
  CHECK(report["n"] == 30);
  CHECK(report.contains("tpr"));

  std::vector<double> x(2 * 11, 0.25), alpha(2 * 11), hard(2 * 11), probs(2 * 2);
  REQUIRE(copsel_infer(model, x.data(), 2, 11, alpha.data(), hard.data(), probs.data()) ==
          COPSEL_OK);
  for (double h : hard) CHECK((h == 0.0 || h == 1.0));
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0));
  CHECK(copsel_infer(model, x.data(), 2, 11, nullptr, nullptr, nullptr) == COPSEL_OK);
  CHECK(copsel_infer(model, x.data(), 2, 10, alpha.data(), nullptr, nullptr) ==
        COPSEL_ERR_SHAPE);

  const fs::path sigma = dir / "sigma.csv", corr = dir / "corr.csv";
  CHECK(copsel_export_sigma(model, ds, 5, sigma.string().c_str(),
                            corr.string().c_str()) == COPSEL_OK);
  CHECK(fs::exists(sigma));
  CHECK(copsel_export_masks(model, ds, (dir / "m.csv").string().c_str()) == COPSEL_OK);
  CHECK(copsel_export_ranking(model, ds, 3, (dir / "r.csv").string().c_str()) ==
        COPSEL_OK);
  CHECK(copsel_export_ranking(model, ds, 0, (dir / "r0.csv").string().c_str()) !=
        COPSEL_OK);

  copsel_model_free(model);
  copsel_dataset_free(ds);
  copsel_model_free(nullptr);
  copsel_dataset_free(nullptr);
}

TEST_CASE("verify reports pass and fail") {
  char* raw = nullptr;
  int passed = -1;
  REQUIRE(copsel_verify("theorem2", R"({"n": 1000})", &raw, &passed) == COPSEL_OK);
  CHECK(passed == 1);
  CHECK(json::parse(take(raw)).contains("match_rate"));
  REQUIRE(copsel_verify("theorem1", R"({"n": 1000, "max_tv": 1e-9})", &raw, &passed) ==
          COPSEL_OK);
  CHECK(passed == 0);
  take(raw);
}
