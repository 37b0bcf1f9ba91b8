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

#include "copsel/copsel.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <ostream>
#include <streambuf>
#include <string>

#include "copsel/errors.hpp"
#include "copsel/experiment.hpp"
#include "copsel/io.hpp"

struct copsel_dataset {
  copsel::Dataset data;
};

struct copsel_model {
  copsel::Model model;
};

namespace {

thread_local std::string g_last_error;

copsel_status fail(copsel_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
copsel_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return COPSEL_OK;
  } catch (const copsel::ShapeError& e) {
    return fail(COPSEL_ERR_SHAPE, e.what());
  } catch (const copsel::DomainError& e) {
    return fail(COPSEL_ERR_DOMAIN, e.what());
  } catch (const copsel::FormatError& e) {
    return fail(COPSEL_ERR_FORMAT, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(COPSEL_ERR_FORMAT, e.what());
  } catch (const copsel::IoError& e) {
    return fail(COPSEL_ERR_IO, e.what());
  } catch (const copsel::NonFiniteError& e) {
    return fail(COPSEL_ERR_NUMERIC, e.what());
  } catch (const copsel::FactorizationError& e) {
    return fail(COPSEL_ERR_NUMERIC, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(COPSEL_ERR_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(COPSEL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(COPSEL_ERR_INTERNAL, "unknown exception");
  }
}

struct NullArgument : std::invalid_argument {
  explicit NullArgument(const char* name)
      : std::invalid_argument(std::string(name) + " is null") {}
};

template <typename T>
void require(T* p, const char* name) {
  if (p == nullptr) throw NullArgument(name);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

copsel::Json parse(const char* text, const char* what) {
  require(text, what);
  try {
    return copsel::Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw copsel::FormatError(std::string(what) + ": " + e.what());
  }
}

copsel::ExperimentConfig config_from(const char* text) {
  copsel::ExperimentConfig c = copsel::experiment_config_from_json(parse(text, "config"));
  c.validate();
  return c;
}

// Line-buffered stream that forwards each completed line to a callback.
class CallbackBuf : public std::streambuf {
 public:
  CallbackBuf(copsel_progress_fn fn, void* user) : fn_(fn), user_(user) {}
  ~CallbackBuf() override {
    if (!line_.empty()) emit();
  }

 protected:
  int overflow(int c) override {
    if (c == traits_type::eof()) return 0;
    if (c == '\n') {
      emit();
    } else {
      line_.push_back(static_cast<char>(c));
    }
    return c;
  }

 private:
  void emit() {
    fn_(line_.c_str(), user_);
    line_.clear();
  }
  copsel_progress_fn fn_;
  void* user_;
  std::string line_;
};

copsel::Json artifacts_json(const copsel::RunArtifacts& a) {
  copsel::Json j{{"config", a.config.string()},
                 {"log_csv", a.log_csv.string()},
                 {"metrics_json", a.metrics_json.string()},
                 {"metrics_csv", a.metrics_csv.string()},
                 {"checkpoint", a.checkpoint.string()},
                 {"sigma_csv", a.sigma_csv.string()},
                 {"correlation_csv", a.correlation_csv.string()},
                 {"test", copsel::to_json(a.test)}};
  if (!a.masks_csv.empty()) j["masks_csv"] = a.masks_csv.string();
  if (!a.lambda_csv.empty()) j["lambda_csv"] = a.lambda_csv.string();
  return j;
}

}  // namespace

extern "C" {

const char* copsel_version(void) { return "1.0.0"; }

const char* copsel_last_error(void) { return g_last_error.c_str(); }

const char* copsel_status_name(copsel_status status) {
  switch (status) {
    case COPSEL_OK: return "ok";
    case COPSEL_ERR_ARGUMENT: return "argument";
    case COPSEL_ERR_SHAPE: return "shape";
    case COPSEL_ERR_DOMAIN: return "domain";
    case COPSEL_ERR_FORMAT: return "format";
    case COPSEL_ERR_IO: return "io";
    case COPSEL_ERR_NUMERIC: return "numeric";
    case COPSEL_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void copsel_free_string(char* s) { std::free(s); }

copsel_status copsel_preset_names(char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    *out_json = dup_string(copsel::Json(copsel::preset_names()).dump());
  });
}

copsel_status copsel_preset(const char* name, char** out_json) {
  return guarded([&] {
    require(name, "name");
    require(out_json, "out_json");
    *out_json = dup_string(copsel::to_json(copsel::preset(name)).dump(2));
  });
}

copsel_status copsel_normalize_config(const char* config_json, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    *out_json = dup_string(copsel::to_json(config_from(config_json)).dump(2));
  });
}

copsel_status copsel_generate(const char* spec_json, const char* out_dir) {
  return guarded([&] {
    require(out_dir, "out_dir");
    const copsel::SyntheticSpec spec =
        copsel::synthetic_spec_from_json(parse(spec_json, "spec"));
    spec.validate();
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw copsel::IoError("cannot create " + dir.string() + ": " + ec.message());
    const copsel::SyntheticSplit split = copsel::generate(spec);
    copsel::write_dataset_csv(split.train, dir / "train.csv");
    copsel::write_dataset_csv(split.test, dir / "test.csv");
    std::ofstream side(dir / "spec.json");
    side << copsel::to_json(spec).dump(2) << '\n';
    if (!side) throw copsel::IoError("cannot write " + (dir / "spec.json").string());
  });
}

copsel_status copsel_dataset_load_csv(const char* path, copsel_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new copsel_dataset{copsel::read_dataset_csv(path)};
  });
}

copsel_status copsel_dataset_load_idx(const char* images, const char* labels,
                                      copsel_dataset** out) {
  return guarded([&] {
    require(images, "images");
    require(labels, "labels");
    require(out, "out");
    *out = new copsel_dataset{copsel::parse_idx(images, labels)};
  });
}

copsel_status copsel_dataset_shape(const copsel_dataset* ds, size_t* rows,
                                   size_t* dim, size_t* classes, int* has_truth) {
  return guarded([&] {
    require(ds, "dataset");
    if (rows) *rows = ds->data.size();
    if (dim) *dim = ds->data.dim();
    if (classes) *classes = ds->data.n_classes;
    if (has_truth) *has_truth = ds->data.has_truth() ? 1 : 0;
  });
}

void copsel_dataset_free(copsel_dataset* ds) { delete ds; }

copsel_status copsel_train(const char* config_json, copsel_progress_fn progress,
                           void* user, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    const copsel::ExperimentConfig config = config_from(config_json);
    std::unique_ptr<CallbackBuf> buf;
    std::unique_ptr<std::ostream> stream;
    if (progress) {
      buf = std::make_unique<CallbackBuf>(progress, user);
      stream = std::make_unique<std::ostream>(buf.get());
    }
    const copsel::RunArtifacts art = copsel::run_train(config, stream.get());
    *out_json = dup_string(artifacts_json(art).dump(2));
  });
}

copsel_status copsel_ablate(const char* config_json, int ranks,
                            copsel_progress_fn progress, void* user,
                            char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    const copsel::ExperimentConfig config = config_from(config_json);
    std::unique_ptr<CallbackBuf> buf;
    std::unique_ptr<std::ostream> stream;
    if (progress) {
      buf = std::make_unique<CallbackBuf>(progress, user);
      stream = std::make_unique<std::ostream>(buf.get());
    }
    copsel::Json rows = copsel::Json::array();
    for (const auto& r : copsel::run_ablation(config, ranks != 0, stream.get())) {
      copsel::Json row = copsel::to_json(r.test);
      row["variant"] = r.variant;
      rows.push_back(row);
    }
    *out_json = dup_string(rows.dump(2));
  });
}

copsel_status copsel_model_load(const char* checkpoint_dir, copsel_model** out) {
  return guarded([&] {
    require(checkpoint_dir, "checkpoint_dir");
    require(out, "out");
    *out = new copsel_model{copsel::load_checkpoint(checkpoint_dir)};
  });
}

void copsel_model_free(copsel_model* model) { delete model; }

copsel_status copsel_model_config(const copsel_model* model, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    *out_json = dup_string(copsel::to_json(model->model.config).dump(2));
  });
}

copsel_status copsel_evaluate(const copsel_model* model, const copsel_dataset* ds,
                              char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(out_json, "out_json");
    *out_json = dup_string(copsel::to_json(copsel::evaluate(model->model, ds->data)).dump(2));
  });
}

copsel_status copsel_infer(const copsel_model* model, const double* x, size_t rows,
                           size_t dim, double* alpha, double* hard, double* probs) {
  return guarded([&] {
    require(model, "model");
    require(x, "x");
    if (dim != model->model.config.d) {
      throw copsel::ShapeError("infer: model expects " +
                               std::to_string(model->model.config.d) +
                               " features, got " + std::to_string(dim));
    }
    copsel::Tensor input(copsel::Shape{rows, dim}, std::vector<double>(x, x + rows * dim));
    const copsel::Inference inf = copsel::infer(model->model, input);
    auto copy = [](const copsel::Tensor& t, double* dst) {
      if (dst) std::copy(t.data().begin(), t.data().end(), dst);
    };
    copy(inf.alpha, alpha);
    copy(inf.hard, hard);
    copy(inf.probs, probs);
  });
}

copsel_status copsel_export_sigma(const copsel_model* model, const copsel_dataset* ds,
                                  size_t rows, const char* sigma_path,
                                  const char* correlation_path) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(sigma_path, "sigma_path");
    const copsel::SigmaExport s = copsel::mean_sigma(model->model, ds->data.x, rows);
    copsel::export_matrix_csv(s.sigma, sigma_path);
    if (correlation_path) copsel::export_matrix_csv(s.correlation, correlation_path);
  });
}

copsel_status copsel_export_masks(const copsel_model* model, const copsel_dataset* ds,
                                  const char* path) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(path, "path");
    copsel::write_masks_csv(copsel::infer(model->model, ds->data.x).hard, path);
  });
}

copsel_status copsel_export_ranking(const copsel_model* model, const copsel_dataset* ds,
                                    size_t m, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(path, "path");
    copsel::write_ranking_csv(copsel::infer(model->model, ds->data.x).alpha, m, path);
  });
}

copsel_status copsel_verify(const char* which, const char* params_json,
                            char** out_json, int* passed) {
  return guarded([&] {
    require(which, "which");
    require(out_json, "out_json");
    const copsel::Json params =
        params_json ? parse(params_json, "params") : copsel::Json::object();
    const copsel::VerifyOutcome v = copsel::run_verify(which, params);
    if (passed) *passed = v.passed ? 1 : 0;
    *out_json = dup_string(v.report.dump(2));
  });
}

}  // extern "C"
