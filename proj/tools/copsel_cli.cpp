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

// copsel: command-line driver over the C interface.
//
// Exit codes: 0 success (or tolerance met), 1 usage or invalid input,
// 2 tolerance violated, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "copsel/copsel.h"
#include "json.hpp"

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitTolerance = 2;
constexpr int kExitRuntime = 3;

// Thrown to unwind with a specific exit code after printing a message.
struct Exit {
  int code;
};

int exit_code_for(copsel_status s) {
  switch (s) {
    case COPSEL_OK: return kExitOk;
    case COPSEL_ERR_ARGUMENT:
    case COPSEL_ERR_SHAPE:
    case COPSEL_ERR_DOMAIN: return kExitUsage;
    default: return kExitRuntime;
  }
}

void check(copsel_status s) {
  if (s == COPSEL_OK) return;
  std::cerr << "copsel: " << copsel_status_name(s) << " error: " << copsel_last_error()
            << '\n';
  throw Exit{exit_code_for(s)};
}

[[noreturn]] void usage_error(const std::string& message) {
  std::cerr << "copsel: " << message << '\n';
  throw Exit{kExitUsage};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  copsel_free_string(s);
  return out;
}

struct DatasetHandle {
  copsel_dataset* p = nullptr;
  ~DatasetHandle() { copsel_dataset_free(p); }
};
struct ModelHandle {
  copsel_model* p = nullptr;
  ~ModelHandle() { copsel_model_free(p); }
};

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) usage_error("cannot read " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    usage_error(path + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  out << text;
  if (!out) {
    std::cerr << "copsel: cannot write " << path << '\n';
    throw Exit{kExitRuntime};
  }
}

// --seed wins, then COPSEL_SEED, then whatever the config holds.
std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("COPSEL_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::strlen(env)) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      usage_error(std::string("COPSEL_SEED is not an unsigned integer: ") + env);
    }
  }
  return std::nullopt;
}

void print_progress(const char* line, void*) { std::cerr << line << '\n'; }

// Options shared by commands that build an experiment configuration.
struct ExperimentOptions {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool nola = false;
  std::string rank;
  std::optional<std::size_t> epochs;
  std::optional<double> lambda;
  std::optional<double> temperature;
  std::optional<std::size_t> k;
  std::string lambda_grid;
  std::string data_dir;
  std::string train_csv;
  std::string test_csv;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_test;
  bool export_masks = false;
  bool quiet = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "Experiment config JSON");
    app->add_option("--preset", preset, "Named preset (see 'copsel presets')");
    app->add_option("--seed", seed, "Seed for data and training (env COPSEL_SEED)");
    app->add_option("--out", out, "Output directory");
    app->add_flag("--nola", nola, "Independent noise instead of the copula");
    app->add_option("--rank", rank, "Loading rank")->check(CLI::IsMember({"low", "full"}));
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lambda", lambda, "Binary-mode penalty");
    app->add_option("--t", temperature, "Sampler temperature");
    app->add_option("--k", k, "Top-k selection count");
    app->add_option("--lambda-grid", lambda_grid,
                    "Comma-separated lambda values chosen on a validation split");
    app->add_option("--data-dir", data_dir, "Directory holding the IDX files");
    app->add_option("--train-csv", train_csv, "Training CSV (switches to CSV data)");
    app->add_option("--test-csv", test_csv, "Test CSV");
    app->add_option("--n-train", n_train, "Synthetic training rows");
    app->add_option("--n-test", n_test, "Synthetic test rows");
    app->add_flag("--export-masks", export_masks, "Write test masks (and ranking)");
    app->add_flag("--quiet", quiet, "No per-epoch progress");
  }

  Json build() const {
    Json config;
    if (!config_path.empty() && !preset.empty()) {
      usage_error("--config and --preset are mutually exclusive");
    }
    if (!config_path.empty()) {
      config = read_json_file(config_path);
    } else if (!preset.empty()) {
      char* text = nullptr;
      check(copsel_preset(preset.c_str(), &text));
      config = Json::parse(take(text));
    } else {
      usage_error("one of --config or --preset is required");
    }
    Json& training = config["training"];
    Json& model = training["model"];
    Json& data = config["data"];
    if (const auto s = resolve_seed(seed)) {
      training["seed"] = *s;
      if (data.value("kind", "synthetic") == "synthetic") data["synthetic"]["seed"] = *s;
    }
    if (!out.empty()) config["out_dir"] = out;
    if (nola) model["nola"] = true;
    if (!rank.empty()) model["rank_mode"] = rank;
    if (epochs) training["epochs"] = *epochs;
    if (lambda) model["sampler"]["lambda"] = *lambda;
    if (temperature) model["sampler"]["t"] = *temperature;
    if (k) model["sampler"]["k"] = *k;
    if (!lambda_grid.empty()) {
      Json grid = Json::array();
      std::stringstream in(lambda_grid);
      std::string item;
      while (std::getline(in, item, ',')) {
        try {
          grid.push_back(std::stod(item));
        } catch (const std::exception&) {
          usage_error("bad --lambda-grid value '" + item + "'");
        }
      }
      config["lambda_grid"] = grid;
    }
    if (!data_dir.empty()) {
      for (const char* key : {"train_images", "train_labels", "test_images", "test_labels"}) {
        if (data.contains(key)) {
          data[key] = (fs::path(data_dir) / fs::path(data[key].get<std::string>()).filename())
                          .string();
        }
      }
    }
    if (!train_csv.empty()) {
      data = Json{{"kind", "csv"}, {"train_csv", train_csv}, {"test_csv", test_csv}};
      model["d"] = 0;  // taken from the file
    }
    if (n_train) data["synthetic"]["n_train"] = *n_train;
    if (n_test) data["synthetic"]["n_test"] = *n_test;
    if (export_masks) config["export_masks"] = true;
    // Round-trip through the library to validate and fill defaults.
    char* normalized = nullptr;
    check(copsel_normalize_config(config.dump().c_str(), &normalized));
    return Json::parse(take(normalized));
  }
};

// Where eval/export read rows from: a CSV, an IDX pair, or the test split of
// an experiment config.
struct DataOptions {
  std::string csv;
  std::string images;
  std::string labels;
  ExperimentOptions experiment;

  void add_to(CLI::App* app) {
    app->add_option("--data", csv, "Dataset CSV");
    app->add_option("--images", images, "IDX images");
    app->add_option("--labels", labels, "IDX labels");
    app->add_option("--config", experiment.config_path, "Use this config's test split");
    app->add_option("--preset", experiment.preset, "Use this preset's test split");
    app->add_option("--seed", experiment.seed, "Seed for a synthetic test split");
    app->add_option("--data-dir", experiment.data_dir, "Directory holding the IDX files");
    app->add_option("--n-train", experiment.n_train, "Synthetic training rows");
    app->add_option("--n-test", experiment.n_test, "Synthetic test rows");
  }

  void load(DatasetHandle& out, const fs::path& scratch) {
    if (!csv.empty()) {
      check(copsel_dataset_load_csv(csv.c_str(), &out.p));
      return;
    }
    if (!images.empty() || !labels.empty()) {
      if (images.empty() || labels.empty()) usage_error("--images needs --labels");
      check(copsel_dataset_load_idx(images.c_str(), labels.c_str(), &out.p));
      return;
    }
    if (experiment.config_path.empty() && experiment.preset.empty()) {
      usage_error("no data: give --data, --images/--labels, --config or --preset");
    }
    const Json config = experiment.build();
    const Json& data = config["data"];
    const std::string kind = data["kind"];
    if (kind == "csv") {
      const std::string path = data["test_csv"].get<std::string>().empty()
                                   ? data["train_csv"].get<std::string>()
                                   : data["test_csv"].get<std::string>();
      check(copsel_dataset_load_csv(path.c_str(), &out.p));
    } else if (kind == "idx") {
      check(copsel_dataset_load_idx(data["test_images"].get<std::string>().c_str(),
                                    data["test_labels"].get<std::string>().c_str(),
                                    &out.p));
    } else {
      check(copsel_generate(data["synthetic"].dump().c_str(), scratch.string().c_str()));
      check(copsel_dataset_load_csv((scratch / "test.csv").string().c_str(), &out.p));
    }
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Instance-wise feature selection with Gaussian-copula samplers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(copsel_version()));

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (CSV + JSON)");
  std::string gen_family = "syn1", gen_out = "data", gen_preset, gen_config;
  std::size_t gen_d = 11, gen_train = 10000, gen_test = 10000;
  std::optional<std::uint64_t> gen_seed;
  bool gen_corr = false, gen_conventional = false, gen_no_switch = false;
  gen->add_option("--family", gen_family, "syn1..syn6");
  gen->add_option("--d", gen_d, "Feature count (>= 11)");
  gen->add_flag("--correlated", gen_corr, "Sigma_ij = 0.5^|i-j|");
  gen->add_option("--n-train", gen_train, "Training rows");
  gen->add_option("--n-test", gen_test, "Test rows");
  gen->add_option("--seed", gen_seed, "Seed (env COPSEL_SEED)");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--preset", gen_preset, "Take the data spec from a preset");
  gen->add_option("--config", gen_config, "Take the data spec from a config");
  gen->add_flag("--conventional-sign", gen_conventional, "P(y=1) = 1/(1+exp(-gamma))");
  gen->add_flag("--exclude-switch", gen_no_switch, "Do not count x_11 as relevant");

  // train / ablate
  auto* tr = app.add_subcommand("train", "Train a model and write a run directory");
  ExperimentOptions train_opts;
  train_opts.add_to(tr);
  auto* ab = app.add_subcommand("ablate", "Full method against its NOLA twin");
  ExperimentOptions ablate_opts;
  ablate_opts.add_to(ab);
  bool ablate_ranks = false;
  ab->add_flag("--ranks", ablate_ranks, "Also compare low and full rank");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_out;
  DataOptions eval_data;
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
  ev->add_option("--out", eval_out, "Write eval.json and eval.csv here");
  eval_data.add_to(ev);

  // verify
  auto* ve = app.add_subcommand("verify", "Statistical checks of the samplers");
  std::string verify_which, verify_params, verify_out;
  std::optional<std::uint64_t> verify_seed;
  ve->add_option("check", verify_which, "theorem1 | theorem2 | copula")
      ->required()
      ->check(CLI::IsMember({"theorem1", "theorem2", "copula"}));
  ve->add_option("--params", verify_params, "JSON object overriding defaults");
  ve->add_option("--config", verify_params, "JSON file overriding defaults");
  ve->add_option("--seed", verify_seed, "Seed (env COPSEL_SEED)");
  ve->add_option("--out", verify_out, "Write <check>.json here");

  // export
  auto* ex = app.add_subcommand("export", "Export Sigma, masks or alpha rankings");
  std::string export_ckpt, export_what, export_out = ".";
  std::size_t export_m = 120, export_rows = 100;
  DataOptions export_data;
  ex->add_option("what", export_what, "sigma | masks | ranking")
      ->required()
      ->check(CLI::IsMember({"sigma", "masks", "ranking"}));
  ex->add_option("--checkpoint", export_ckpt, "Checkpoint directory")->required();
  ex->add_option("--out", export_out, "Output directory");
  ex->add_option("--m", export_m, "Ranking width");
  ex->add_option("--rows", export_rows, "Rows averaged into Sigma");
  export_data.add_to(ex);

  app.add_subcommand("presets", "List preset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (gen->parsed()) {
    Json spec;
    if (!gen_preset.empty() || !gen_config.empty()) {
      ExperimentOptions o;
      o.preset = gen_preset;
      o.config_path = gen_config;
      const Json config = o.build();
      if (config["data"]["kind"] != "synthetic") usage_error("that config has no synthetic data");
      spec = config["data"]["synthetic"];
    } else {
      spec = Json{{"family", gen_family}, {"d", gen_d}, {"correlated", gen_corr},
                  {"n_train", gen_train}, {"n_test", gen_test}};
    }
    // Explicit flags override a preset or config.
    if (gen->count("--family")) spec["family"] = gen_family;
    if (gen->count("--d")) spec["d"] = gen_d;
    if (gen_corr) spec["correlated"] = true;
    if (gen->count("--n-train")) spec["n_train"] = gen_train;
    if (gen->count("--n-test")) spec["n_test"] = gen_test;
    if (const auto s = resolve_seed(gen_seed)) spec["seed"] = *s;
    if (gen_conventional) spec["conventional_sign"] = true;
    if (gen_no_switch) spec["switch_relevant"] = false;
    check(copsel_generate(spec.dump().c_str(), gen_out.c_str()));
    std::cout << (fs::path(gen_out) / "train.csv").string() << '\n'
              << (fs::path(gen_out) / "test.csv").string() << '\n';
    return kExitOk;
  }

  if (tr->parsed()) {
    const Json config = train_opts.build();
    char* report = nullptr;
    check(copsel_train(config.dump().c_str(), train_opts.quiet ? nullptr : print_progress,
                       nullptr, &report));
    std::cout << take(report) << '\n';
    return kExitOk;
  }

  if (ab->parsed()) {
    const Json config = ablate_opts.build();
    char* report = nullptr;
    check(copsel_ablate(config.dump().c_str(), ablate_ranks ? 1 : 0,
                        ablate_opts.quiet ? nullptr : print_progress, nullptr, &report));
    std::cout << take(report) << '\n';
    return kExitOk;
  }

  if (ev->parsed()) {
    ModelHandle model;
    check(copsel_model_load(eval_ckpt.c_str(), &model.p));
    DatasetHandle data;
    const fs::path scratch = eval_out.empty() ? fs::temp_directory_path() / "copsel_eval_data"
                                              : fs::path(eval_out) / "data";
    eval_data.load(data, scratch);
    char* text = nullptr;
    check(copsel_evaluate(model.p, data.p, &text));
    const Json report = Json::parse(take(text));
    if (!eval_out.empty()) {
      write_file(fs::path(eval_out) / "eval.json", report.dump(2) + "\n");
      auto cell = [&](const char* key) {
        if (!report.contains(key)) return std::string();
        std::ostringstream s;
        s.precision(17);
        s << report[key].get<double>();
        return s.str();
      };
      write_file(fs::path(eval_out) / "eval.csv",
                 "n,tpr,fdr,accuracy,mean_selected\n" +
                     std::to_string(report["n"].get<std::size_t>()) + "," + cell("tpr") +
                     "," + cell("fdr") + "," + cell("accuracy") + "," +
                     cell("mean_selected") + "\n");
    }
    std::cout << report.dump(2) << '\n';
    return kExitOk;
  }

  if (ve->parsed()) {
    Json params = Json::object();
    if (!verify_params.empty()) {
      if (fs::exists(verify_params)) {
        params = read_json_file(verify_params);
      } else {
        try {
          params = Json::parse(verify_params);
        } catch (const Json::exception& e) {
          usage_error(std::string("--params: ") + e.what());
        }
      }
    }
    if (const auto s = resolve_seed(verify_seed)) params["seed"] = *s;
    char* text = nullptr;
    int passed = 0;
    check(copsel_verify(verify_which.c_str(), params.dump().c_str(), &text, &passed));
    const std::string report = take(text);
    if (!verify_out.empty()) {
      write_file(fs::path(verify_out) / (verify_which + ".json"), report + "\n");
    }
    std::cout << report << '\n';
    return passed ? kExitOk : kExitTolerance;
  }

  if (ex->parsed()) {
    ModelHandle model;
    check(copsel_model_load(export_ckpt.c_str(), &model.p));
    DatasetHandle data;
    export_data.load(data, fs::path(export_out) / "data");
    std::error_code ec;
    fs::create_directories(export_out, ec);
    const fs::path dir(export_out);
    if (export_what == "sigma") {
      check(copsel_export_sigma(model.p, data.p, export_rows,
                                (dir / "sigma.csv").string().c_str(),
                                (dir / "correlation.csv").string().c_str()));
      std::cout << (dir / "sigma.csv").string() << '\n'
                << (dir / "correlation.csv").string() << '\n';
    } else if (export_what == "masks") {
      check(copsel_export_masks(model.p, data.p, (dir / "masks.csv").string().c_str()));
      std::cout << (dir / "masks.csv").string() << '\n';
    } else {
      check(copsel_export_ranking(model.p, data.p, export_m,
                                  (dir / "ranking.csv").string().c_str()));
      std::cout << (dir / "ranking.csv").string() << '\n';
    }
    return kExitOk;
  }

  // presets
  char* names = nullptr;
  check(copsel_preset_names(&names));
  for (const auto& n : Json::parse(take(names))) std::cout << n.get<std::string>() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees many same-sized temporaries; keep them on
  // the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  try {
    return run(argc, argv);
  } catch (const Exit& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "copsel: " << e.what() << '\n';
    return kExitRuntime;
  }
}
