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

// Selector and classifier networks trained jointly through the sampler.
//
//   ChoiceNet   x -> act(W1) -> act(W2) = O_h -> W3 -> scores alpha
//               O_h -> ReLU(O_h W_L) -> L  (per-sample loading, [d, p])
//               O_h -> |mean(tanh(O_h W_sigma))| + 1e-4 -> sigma
//   Sampler     alpha, copula noise u -> relaxed mask z~
//   PredictNet  x * z~ -> BN(act(W1)) -> BN(act(W2)) -> softmax(W3)
//
// Parameters live in Model as plain tensors; each forward pass binds them
// to a fresh tape.

#ifndef COPSEL_NETWORKS_HPP_
#define COPSEL_NETWORKS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "copsel/autodiff.hpp"
#include "copsel/copula.hpp"
#include "copsel/dataset.hpp"
#include "copsel/random.hpp"
#include "copsel/samplers.hpp"

namespace copsel {

enum class Activation { kRelu, kSelu };

// Binary-mode score head. kProbability reads a sigmoid output as the
// inclusion probability, so the sampler's log-odds are the pre-sigmoid
// score; kSigmoid feeds the sigmoid output itself to the sampler as alpha.
enum class ScoreHead { kProbability, kSigmoid };

// How correlated noise is drawn: Cholesky of R, or the factor structure
// (same law, O(d p)).
enum class NoisePath { kCholesky, kFactor };

// What PredictNet sees during training: the relaxed mask, or the hard mask
// with the relaxed mask's gradient (straight-through).
enum class MaskEstimator { kSoft, kStraightThrough };

inline constexpr double kSigmaFloor = 1e-4;
inline constexpr double kAlphaFloor = 1e-6;

struct ModelConfig {
  SelectionMode mode = SelectionMode::kBinary;
  std::size_t d = 0;
  std::size_t n_classes = 2;
  std::size_t h_c = 100;
  std::size_t h_p = 200;
  Activation activation = Activation::kSelu;
  ScoreHead score_head = ScoreHead::kProbability;
  RankMode rank = RankMode::kLow;
  std::size_t rank_p = 2;  // loading columns in low-rank mode
  double tau = 1.0;        // correlation scale in top-k mode
  bool nola = false;       // independent noise; the copula path is unused
  NoisePath noise_path = NoisePath::kCholesky;
  MaskEstimator estimator = MaskEstimator::kSoft;
  SamplerParams sampler;

  std::size_t loading_columns() const {
    return rank == RankMode::kFull ? d : rank_p;
  }
  // Throws DomainError / ShapeError for illegal combinations.
  void validate() const;
};

struct Model {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Tensor> params;
  BatchNormState bn1;
  BatchNormState bn2;

  std::size_t index(const std::string& name) const;
  const Tensor& param(const std::string& name) const {
    return params[index(name)];
  }
  Tensor& param(const std::string& name) { return params[index(name)]; }
  std::size_t parameter_count() const;
};

// Fan-in scaled uniform weights (bound sqrt(3 / fan_in)), zero biases, unit
// batch-norm scales.
Model init_model(const ModelConfig& config, Rng& rng);

// Model parameters bound to one tape, in Model::params order.
struct Bound {
  std::vector<Var> vars;
  const Model* model = nullptr;
  Var operator[](const std::string& name) const {
    return vars[model->index(name)];
  }
};
Bound bind(Tape& tape, const Model& model, bool trainable);

struct ChoiceOutput {
  Var alpha;  // [B, d]; log-odds (binary) or positive weights (top-k)
  CorrelationModel correlation;
};
ChoiceOutput choice_forward(const Bound& p, Var x);

// Rows are probability vectors.
Var predict_forward(const Bound& p, Var x, Model& model, bool training);
// Inference-mode batch norm; leaves the model untouched.
Var predict_forward(const Bound& p, Var x, const Model& model);

// mean CE + lambda * mean_b(sum_i soft_bi)
Var loss_binary(Var probs, std::span<const int> labels, Var soft, double lambda);
// mean CE; the cardinality is fixed by the sampler.
Var loss_topk(Var probs, std::span<const int> labels);

struct ForwardResult {
  ChoiceOutput choice;
  NoiseDraw noise;
  RelaxedMask mask;
  Var probs;
  Var loss;
};

// Width of one noise row: d, or d + loading columns for the factor path.
std::size_t noise_width(const ModelConfig& config);

// Training-mode pass. With `zeta` the noise is fixed ([B, noise_width]);
// otherwise it is drawn from `rng`.
ForwardResult forward_train(Tape& tape, const Bound& p, Model& model,
                            const Tensor& x, std::span<const int> labels,
                            Rng* rng, const Tensor* zeta = nullptr,
                            bool batch_norm_training = true);

struct AdamState {
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// Bias-corrected Adam; weight decay is decoupled (p -= lr * wd * p).
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state);

struct TrainingConfig {
  ModelConfig model;
  double learning_rate = 1e-4;
  std::size_t batch_size = 1000;
  std::size_t epochs = 1000;
  double weight_decay = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double mean_soft_mass = 0.0;  // mean over samples of sum_i soft_i
  double seconds = 0.0;
  // Filled by the per-epoch callback, NaN when unused.
  double metric_a = 0.0;
  double metric_b = 0.0;
};

using EpochCallback = std::function<void(const Model&, EpochLog&)>;

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

// Deterministic in (config, data). A non-finite value aborts with
// NonFiniteError naming the epoch and batch.
TrainResult train(const TrainingConfig& config, const Dataset& data,
                  const EpochCallback& on_epoch = nullptr);

struct InferenceOptions {
  bool bernoulli = false;  // binary mode: sample instead of rounding
  std::uint64_t seed = 0;
  std::size_t batch_size = 1000;
};

struct Inference {
  Tensor alpha;  // [n, d]
  Tensor soft;   // [n, d]
  Tensor hard;   // [n, d]
  Tensor probs;  // PredictNet on x * hard, [n, classes]
};

// Binary: hard = round(P(z = 1)) (or a Bernoulli draw), where P(z = 1) is
// logistic(alpha) for the probability head and alpha itself for the sigmoid
// head. Top-k: noise is switched off (u = 1/2) and hard = top-k of alpha.
Inference infer(const Model& model, const Tensor& x,
                const InferenceOptions& options = {});

// Checkpoint = manifest.json (config, names, shapes, offsets, config hash)
// plus params.bin (little-endian float64, manifest order).
void save_checkpoint(const Model& model, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace copsel

#endif  // COPSEL_NETWORKS_HPP_
