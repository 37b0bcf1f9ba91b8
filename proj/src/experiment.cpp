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

#include "copsel/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "copsel/errors.hpp"
#include "format.hpp"
#include "copsel/io.hpp"

namespace copsel {
namespace {

constexpr std::pair<const char*, SourceKind> kSources[] = {
    {"synthetic", SourceKind::kSynthetic},
    {"idx", SourceKind::kIdx},
    {"csv", SourceKind::kCsv}};

const char* source_name(SourceKind k) {
  for (const auto& [name, kind] : kSources) {
    if (kind == k) return name;
  }
  return "?";
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

// Missing values are empty cells.
std::string format_cell(double v) { return std::isnan(v) ? "" : format_double(v); }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// Fills d and the class count from the data, or checks them if set.
TrainingConfig fit_to_data(TrainingConfig tc, const Dataset& train) {
  if (tc.model.d == 0) tc.model.d = train.dim();
  if (tc.model.d != train.dim()) {
    throw ShapeError("config expects d = " + std::to_string(tc.model.d) +
                     ", data has " + std::to_string(train.dim()) + " features");
  }
  tc.model.n_classes = std::max(tc.model.n_classes, train.n_classes);
  tc.validate();
  return tc;
}

ExperimentConfig synthetic_preset(Family family, std::size_t d, bool correlated) {
  ExperimentConfig c;
  c.preset = family_name(family) + "-" + std::to_string(d) + "d" +
             (correlated ? "-corr" : "");
  c.data.kind = SourceKind::kSynthetic;
  c.data.synthetic.family = family;
  c.data.synthetic.d = d;
  c.data.synthetic.correlated = correlated;
  TrainingConfig& t = c.training;
  t.model.mode = SelectionMode::kBinary;
  t.model.d = d;
  t.model.n_classes = 2;
  t.model.h_c = 100;
  t.model.h_p = 200;
  t.model.sampler.temperature = 3.0;
  t.model.sampler.lambda = kDefaultSyntheticLambda;
  t.model.noise_path = d > 32 ? NoisePath::kFactor : NoisePath::kCholesky;
  t.learning_rate = 1e-4;
  t.batch_size = 1000;
  t.epochs = 1000;
  t.weight_decay = 1e-3;
  c.out_dir = "runs/" + c.preset;
  return c;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.kind == SourceKind::kSynthetic) data.synthetic.validate();
  if (data.kind == SourceKind::kIdx &&
      (data.train_images.empty() || data.train_labels.empty() ||
       data.test_images.empty() || data.test_labels.empty())) {
    throw DomainError("experiment: IDX source needs train/test image and label paths");
  }
  if (data.kind == SourceKind::kCsv && data.train_csv.empty()) {
    throw DomainError("experiment: CSV source needs train_csv");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw DomainError("experiment: validation_fraction must be in (0, 1)");
  }
  for (double l : lambda_grid) {
    if (!(l >= 0.0)) throw DomainError("experiment: lambda grid values must be >= 0");
  }
  if (out_dir.empty()) throw DomainError("experiment: out_dir is empty");
  if (training.model.d != 0) training.validate();
}

Json to_json(const ExperimentConfig& c) {
  Json data{{"kind", source_name(c.data.kind)}};
  switch (c.data.kind) {
    case SourceKind::kSynthetic:
      data["synthetic"] = to_json(c.data.synthetic);
      break;
    case SourceKind::kIdx:
      data["train_images"] = c.data.train_images;
      data["train_labels"] = c.data.train_labels;
      data["test_images"] = c.data.test_images;
      data["test_labels"] = c.data.test_labels;
      break;
    case SourceKind::kCsv:
      data["train_csv"] = c.data.train_csv;
      data["test_csv"] = c.data.test_csv;
      break;
  }
  return Json{{"preset", c.preset},
              {"training", to_json(c.training)},
              {"data", data},
              {"out_dir", c.out_dir},
              {"export_masks", c.export_masks},
              {"top_m", c.top_m},
              {"sigma_rows", c.sigma_rows},
              {"monitor_rows", c.monitor_rows},
              {"lambda_grid", c.lambda_grid},
              {"validation_fraction", c.validation_fraction},
              {"lambda_tolerance", c.lambda_tolerance}};
}

ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig base) {
  if (!j.is_object()) throw FormatError("experiment config must be a JSON object");
  read(j, "preset", base.preset);
  if (j.contains("training")) {
    base.training = training_config_from_json(j["training"], base.training);
  }
  if (j.contains("data")) {
    const Json& d = j["data"];
    if (!d.is_object()) throw FormatError("config: 'data' must be an object");
    if (d.contains("kind")) {
      const std::string kind = d["kind"].is_string() ? d["kind"].get<std::string>() : "";
      bool found = false;
      for (const auto& [name, k] : kSources) {
        if (kind == name) {
          base.data.kind = k;
          found = true;
        }
      }
      if (!found) {
        throw FormatError("config: data kind '" + kind + "', expected synthetic|idx|csv");
      }
    }
    if (d.contains("synthetic")) {
      base.data.synthetic = synthetic_spec_from_json(d["synthetic"], base.data.synthetic);
    }
    read(d, "train_images", base.data.train_images);
    read(d, "train_labels", base.data.train_labels);
    read(d, "test_images", base.data.test_images);
    read(d, "test_labels", base.data.test_labels);
    read(d, "train_csv", base.data.train_csv);
    read(d, "test_csv", base.data.test_csv);
  }
  read(j, "out_dir", base.out_dir);
  read(j, "export_masks", base.export_masks);
  read(j, "top_m", base.top_m);
  read(j, "sigma_rows", base.sigma_rows);
  read(j, "monitor_rows", base.monitor_rows);
  read(j, "lambda_grid", base.lambda_grid);
  read(j, "validation_fraction", base.validation_fraction);
  read(j, "lambda_tolerance", base.lambda_tolerance);
  return base;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (int f = 1; f <= 6; ++f) {
    const std::string fam = family_name(static_cast<Family>(f));
    names.push_back(fam + "-11d");
    names.push_back(fam + "-100d");
    names.push_back(fam + "-100d-corr");
  }
  names.push_back("mnist-topk");
  names.push_back("mnist-binary");
  return names;
}

ExperimentConfig preset(const std::string& name) {
  for (int f = 1; f <= 6; ++f) {
    const Family family = static_cast<Family>(f);
    const std::string fam = family_name(family);
    if (name == fam + "-11d") return synthetic_preset(family, 11, false);
    if (name == fam + "-100d") return synthetic_preset(family, 100, false);
    if (name == fam + "-100d-corr") return synthetic_preset(family, 100, true);
  }
  if (name == "mnist-topk" || name == "mnist-binary") {
    ExperimentConfig c;
    c.preset = name;
    c.data.kind = SourceKind::kIdx;
    c.data.train_images = "train-images-idx3-ubyte";
    c.data.train_labels = "train-labels-idx1-ubyte";
    c.data.test_images = "t10k-images-idx3-ubyte";
    c.data.test_labels = "t10k-labels-idx1-ubyte";
    TrainingConfig& t = c.training;
    t.model.d = 784;
    t.model.n_classes = 10;
    t.model.h_c = 16;
    t.model.h_p = 16;
    t.model.rank = RankMode::kFull;
    t.model.noise_path = NoisePath::kFactor;
    t.model.sampler.temperature = 1.0;
    if (name == "mnist-topk") {
      t.model.mode = SelectionMode::kTopK;
      t.model.sampler.k = 40;
    } else {
      t.model.mode = SelectionMode::kBinary;
      t.model.sampler.lambda = kDefaultSyntheticLambda;
    }
    t.learning_rate = 1e-3;
    t.batch_size = 1000;
    t.epochs = 100;
    t.weight_decay = 1e-3;
    c.out_dir = "runs/" + name;
    return c;
  }
  std::string known;
  for (const std::string& n : preset_names()) known += " " + n;
  throw DomainError("unknown preset '" + name + "'; known:" + known);
}

LoadedData load_data(const DataSource& source) {
  LoadedData out;
  switch (source.kind) {
    case SourceKind::kSynthetic: {
      SyntheticSplit split = generate(source.synthetic);
      out.train = std::move(split.train);
      out.test = std::move(split.test);
      break;
    }
    case SourceKind::kIdx:
      out.train = parse_idx(source.train_images, source.train_labels);
      out.test = parse_idx(source.test_images, source.test_labels);
      break;
    case SourceKind::kCsv:
      out.train = read_dataset_csv(source.train_csv);
      out.test = source.test_csv.empty() ? out.train : read_dataset_csv(source.test_csv);
      break;
  }
  if (out.train.dim() != out.test.dim()) {
    throw ShapeError("train has " + std::to_string(out.train.dim()) +
                     " features, test has " + std::to_string(out.test.dim()));
  }
  const std::size_t classes = std::max(out.train.n_classes, out.test.n_classes);
  out.train.n_classes = out.test.n_classes = classes;
  return out;
}

EvalReport evaluate(const Model& model, const Dataset& data) {
  data.validate();
  if (data.dim() != model.config.d) {
    throw ShapeError("evaluate: data has " + std::to_string(data.dim()) +
                     " features, model expects " + std::to_string(model.config.d));
  }
  if (data.n_classes > model.config.n_classes) {
    throw ShapeError("evaluate: data has more classes than the model");
  }
  const Inference inf = infer(model, data.x);
  EvalReport r;
  r.n = data.size();
  r.accuracy = accuracy(inf.probs, data.y);
  double selected = 0.0;
  for (double h : inf.hard.data()) selected += h;
  r.mean_selected = r.n ? selected / static_cast<double>(r.n) : 0.0;
  if (data.has_truth()) {
    r.has_truth = true;
    r.selection = tpr_fdr(inf.hard, data.relevant);
  }
  return r;
}

Json to_json(const EvalReport& r) {
  Json j{{"n", r.n}, {"accuracy", r.accuracy}, {"mean_selected", r.mean_selected}};
  if (r.has_truth) {
    j["tpr"] = r.selection.tpr;
    j["fdr"] = r.selection.fdr;
  }
  return j;
}

std::string eval_csv_header() { return "n,tpr,fdr,accuracy,mean_selected"; }

std::string eval_csv_row(const EvalReport& r) {
  const double nan = std::nan("");
  return std::to_string(r.n) + "," +
         format_cell(r.has_truth ? r.selection.tpr : nan) + "," +
         format_cell(r.has_truth ? r.selection.fdr : nan) + "," +
         format_double(r.accuracy) + "," + format_double(r.mean_selected);
}

SigmaExport mean_sigma(const Model& model, const Tensor& x, std::size_t rows) {
  const std::size_t d = model.config.d;
  if (x.rank() != 2 || x.dim(1) != d) {
    throw ShapeError("mean_sigma: expected [n, " + std::to_string(d) + "]");
  }
  rows = std::min(rows, x.dim(0));
  SigmaExport out{Tensor(Shape{d, d}), Tensor(Shape{d, d})};
  if (model.config.nola || rows == 0) {
    for (std::size_t i = 0; i < d; ++i) out.sigma.at(i, i) = out.correlation.at(i, i) = 1.0;
    return out;
  }
  // Chunks keep [chunk, d, d] temporaries small for wide inputs.
  const std::size_t chunk = std::max<std::size_t>(1, (1u << 22) / (d * d));
  for (std::size_t lo = 0; lo < rows; lo += chunk) {
    const std::size_t hi = std::min(rows, lo + chunk);
    std::vector<double> v(x.data().begin() + lo * d, x.data().begin() + hi * d);
    Tape tape;
    Bound p = bind(tape, model, false);
    ChoiceOutput ch = choice_forward(p, tape.constant(Tensor(Shape{hi - lo, d}, std::move(v))));
    Var sigma = build_covariance(ch.correlation);
    Var corr = normalize(sigma);
    const auto s = sigma.value().data();
    const auto c = corr.value().data();
    for (std::size_t b = 0; b < hi - lo; ++b) {
      for (std::size_t k = 0; k < d * d; ++k) {
        out.sigma[k] += s[b * d * d + k];
        out.correlation[k] += c[b * d * d + k];
      }
    }
  }
  for (double& v : out.sigma.data()) v /= static_cast<double>(rows);
  for (double& v : out.correlation.data()) v /= static_cast<double>(rows);
  return out;
}

void write_masks_csv(const Tensor& hard, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  const std::size_t n = hard.dim(0), d = hard.dim(1);
  for (std::size_t i = 0; i < d; ++i) out << (i ? "," : "") << "x_" << i + 1;
  out << '\n';
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      out << (i ? "," : "") << (hard.at(r, i) != 0.0 ? 1 : 0);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_ranking_csv(const Tensor& alpha, std::size_t m,
                       const std::filesystem::path& path) {
  const std::size_t n = alpha.dim(0), d = alpha.dim(1);
  if (m == 0 || m > d) {
    throw DomainError("ranking: m = " + std::to_string(m) + " outside [1, " +
                      std::to_string(d) + "]");
  }
  std::ofstream out = open_out(path);
  for (std::size_t k = 0; k < m; ++k) out << (k ? "," : "") << "rank_" << k + 1;
  out << '\n';
  std::vector<std::size_t> order(d);
  for (std::size_t r = 0; r < n; ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return alpha.at(r, a) > alpha.at(r, b);
    });
    for (std::size_t k = 0; k < m; ++k) out << (k ? "," : "") << order[k] + 1;
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

LambdaSearch select_lambda(const ExperimentConfig& config, const Dataset& data,
                           std::ostream* progress) {
  if (config.lambda_grid.empty()) throw DomainError("select_lambda: empty grid");
  // Seeded shuffle, then the last fraction of rows is held out.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(config.training.seed).derive(0x76616c);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.engine()() % i]);
  }
  const auto n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(order.size())));
  if (n_val == 0 || n_val >= order.size()) {
    throw DomainError("select_lambda: validation split is empty or covers all rows");
  }
  const std::span<const std::size_t> all(order);
  const Dataset fit = data.subset(all.first(order.size() - n_val));
  const Dataset val = data.subset(all.last(n_val));

  LambdaSearch search;
  for (double lambda : config.lambda_grid) {
    TrainingConfig tc = fit_to_data(config.training, fit);
    tc.model.sampler.lambda = lambda;
    const TrainResult r = train(tc, fit);
    const EvalReport rep = evaluate(r.model, val);
    search.trials.push_back({lambda, rep.accuracy, rep.mean_selected});
    if (progress) {
      *progress << "lambda " << lambda << ": validation accuracy " << rep.accuracy
                << ", mean selected " << rep.mean_selected << '\n';
    }
  }
  double best = -1.0;
  for (const LambdaTrial& t : search.trials) best = std::max(best, t.accuracy);
  search.chosen = -1.0;
  for (const LambdaTrial& t : search.trials) {
    if (t.accuracy >= best - config.lambda_tolerance) {
      search.chosen = std::max(search.chosen, t.lambda);
    }
  }
  return search;
}

RunArtifacts run_train(const ExperimentConfig& config, std::ostream* progress) {
  config.validate();
  return run_train(config, load_data(config.data), progress);
}

RunArtifacts run_train(const ExperimentConfig& config, const LoadedData& data,
                       std::ostream* progress) {
  config.validate();
  namespace fs = std::filesystem;
  const fs::path dir = config.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  RunArtifacts art;
  art.config = dir / "config.json";
  write_text(art.config, to_json(config).dump(2) + "\n");

  TrainingConfig tc = fit_to_data(config.training, data.train);
  if (!config.lambda_grid.empty() && tc.model.mode == SelectionMode::kBinary) {
    const LambdaSearch search = select_lambda(config, data.train, progress);
    tc.model.sampler.lambda = search.chosen;
    art.lambda_csv = dir / "lambda_search.csv";
    std::string text = "lambda,val_accuracy,val_mean_selected,chosen\n";
    for (const LambdaTrial& t : search.trials) {
      text += format_double(t.lambda) + "," + format_double(t.accuracy) + "," +
              format_double(t.mean_selected) + "," +
              (t.lambda == search.chosen ? "1" : "0") + "\n";
    }
    write_text(art.lambda_csv, text);
  }

  const Dataset monitor = [&] {
    std::vector<std::size_t> idx(std::min(config.monitor_rows, data.test.size()));
    std::iota(idx.begin(), idx.end(), 0);
    return data.test.subset(idx);
  }();
  art.log_csv = dir / "log.csv";
  std::ofstream log = open_out(art.log_csv);
  log << "epoch,loss,mean_soft_mass," << (monitor.has_truth() ? "tpr,fdr," : "")
      << "accuracy,mean_selected\n";
  auto on_epoch = [&](const Model& m, EpochLog& e) {
    const EvalReport rep = monitor.size() ? evaluate(m, monitor) : EvalReport{};
    e.metric_a = rep.has_truth ? rep.selection.tpr : rep.accuracy;
    e.metric_b = rep.has_truth ? rep.selection.fdr : rep.mean_selected;
    log << e.epoch << ',' << format_double(e.loss) << ','
        << format_double(e.mean_soft_mass) << ',';
    if (monitor.has_truth()) {
      log << format_double(rep.selection.tpr) << ',' << format_double(rep.selection.fdr)
          << ',';
    }
    log << format_double(rep.accuracy) << ',' << format_double(rep.mean_selected)
        << '\n';
    log.flush();
    if (progress) {
      *progress << "epoch " << e.epoch << "/" << tc.epochs << " loss " << e.loss;
      if (rep.has_truth) {
        *progress << " tpr " << rep.selection.tpr << " fdr " << rep.selection.fdr;
      } else {
        *progress << " accuracy " << rep.accuracy;
      }
      *progress << " (" << e.seconds << " s)\n";
    }
  };
  TrainResult result = train(tc, data.train, on_epoch);
  log.close();
  art.model = std::move(result.model);

  art.test = evaluate(art.model, data.test);
  art.metrics_json = dir / "metrics.json";
  Json metrics{{"test", to_json(art.test)},
               {"lambda", tc.model.sampler.lambda},
               {"epochs", tc.epochs}};
  write_text(art.metrics_json, metrics.dump(2) + "\n");
  art.metrics_csv = dir / "metrics.csv";
  write_text(art.metrics_csv, eval_csv_header() + "\n" + eval_csv_row(art.test) + "\n");

  art.checkpoint = dir / "checkpoint";
  save_checkpoint(art.model, art.checkpoint);

  const SigmaExport sig = mean_sigma(art.model, data.test.x, config.sigma_rows);
  art.sigma_csv = dir / "sigma.csv";
  art.correlation_csv = dir / "correlation.csv";
  export_matrix_csv(sig.sigma, art.sigma_csv);
  export_matrix_csv(sig.correlation, art.correlation_csv);

  if (config.export_masks) {
    const Inference inf = infer(art.model, data.test.x);
    art.masks_csv = dir / "masks.csv";
    write_masks_csv(inf.hard, art.masks_csv);
    if (tc.model.mode == SelectionMode::kTopK) {
      write_ranking_csv(inf.alpha, std::min(config.top_m, tc.model.d),
                        dir / "ranking.csv");
    }
  }
  return art;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& config, bool ranks,
                                      std::ostream* progress) {
  config.validate();
  const LoadedData data = load_data(config.data);
  std::vector<std::pair<std::string, ExperimentConfig>> variants;
  ExperimentConfig full = config;
  full.training.model.nola = false;
  ExperimentConfig nola = config;
  nola.training.model.nola = true;
  variants.emplace_back("full", full);
  variants.emplace_back("nola", nola);
  if (ranks) {
    ExperimentConfig low = full, high = full;
    low.training.model.rank = RankMode::kLow;
    high.training.model.rank = RankMode::kFull;
    variants.emplace_back("low_rank", low);
    variants.emplace_back("full_rank", high);
  }
  std::vector<AblationRow> rows;
  for (auto& [name, cfg] : variants) {
    cfg.out_dir = (std::filesystem::path(config.out_dir) / name).string();
    if (progress) *progress << "== variant " << name << '\n';
    rows.push_back({name, run_train(cfg, data, progress).test});
  }
  std::string text = "variant," + eval_csv_header() + "\n";
  for (const AblationRow& r : rows) text += r.variant + "," + eval_csv_row(r.test) + "\n";
  write_text(std::filesystem::path(config.out_dir) / "ablation.csv", text);
  return rows;
}

}  // namespace copsel
