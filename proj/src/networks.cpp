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

#include "copsel/networks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "copsel/errors.hpp"

namespace copsel {
namespace {

Var activate(Var x, Activation a) {
  return a == Activation::kSelu ? selu(x) : relu(x);
}

Var affine(Var x, Var w, Var b) { return add(matmul(x, w), b); }

void add_param(Model& m, std::string name, Tensor value) {
  m.names.push_back(std::move(name));
  m.params.push_back(std::move(value));
}

Tensor fan_in_uniform(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(in));
  Tensor w(Shape{in, out});
  for (double& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return w;
}

// Mask rows [lo, hi) of x.
Tensor rows_of(const Tensor& x, std::size_t lo, std::size_t hi) {
  const std::size_t d = x.dim(1);
  Tensor out(Shape{hi - lo, d});
  std::copy(x.data().begin() + lo * d, x.data().begin() + hi * d,
            out.data().begin());
  return out;
}

void copy_rows(const Tensor& src, Tensor& dst, std::size_t lo) {
  std::copy(src.data().begin(), src.data().end(),
            dst.data().begin() + lo * src.dim(1));
}

}  // namespace

void ModelConfig::validate() const {
  if (d == 0) throw DomainError("model: d must be > 0");
  if (n_classes < 2) throw DomainError("model: need at least 2 classes");
  if (h_c == 0 || h_p == 0) throw DomainError("model: hidden sizes must be > 0");
  if (rank == RankMode::kLow && (rank_p < 1 || rank_p > d)) {
    throw DomainError("model: low-rank p = " + std::to_string(rank_p) +
                      " outside [1, " + std::to_string(d) + "]");
  }
  if (!(tau >= 0.0)) throw DomainError("model: tau must be >= 0");
  sampler.validate(d, mode);
}

std::size_t Model::index(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DomainError("model: no parameter '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : params) n += t.size();
  return n;
}

Model init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.d, hc = config.h_c, hp = config.h_p;
  Model m;
  m.config = config;
  add_param(m, "choice.w1", fan_in_uniform(d, hc, rng));
  add_param(m, "choice.b1", Tensor(Shape{hc}));
  add_param(m, "choice.w2", fan_in_uniform(hc, hc, rng));
  add_param(m, "choice.b2", Tensor(Shape{hc}));
  add_param(m, "choice.w3", fan_in_uniform(hc, d, rng));
  add_param(m, "choice.b3", Tensor(Shape{d}));
  add_param(m, "choice.w_l", fan_in_uniform(hc, d * config.loading_columns(), rng));
  add_param(m, "choice.w_sigma", fan_in_uniform(hc, d, rng));
  add_param(m, "predict.w1", fan_in_uniform(d, hp, rng));
  add_param(m, "predict.b1", Tensor(Shape{hp}));
  add_param(m, "predict.bn1.gamma", Tensor(Shape{hp}, 1.0));
  add_param(m, "predict.bn1.beta", Tensor(Shape{hp}));
  add_param(m, "predict.w2", fan_in_uniform(hp, hp, rng));
  add_param(m, "predict.b2", Tensor(Shape{hp}));
  add_param(m, "predict.bn2.gamma", Tensor(Shape{hp}, 1.0));
  add_param(m, "predict.bn2.beta", Tensor(Shape{hp}));
  add_param(m, "predict.w3", fan_in_uniform(hp, config.n_classes, rng));
  add_param(m, "predict.b3", Tensor(Shape{config.n_classes}));
  for (BatchNormState* bn : {&m.bn1, &m.bn2}) {
    bn->running_mean.assign(hp, 0.0);
    bn->running_var.assign(hp, 1.0);
  }
  return m;
}

Bound bind(Tape& tape, const Model& model, bool trainable) {
  Bound b;
  b.model = &model;
  b.vars.reserve(model.params.size());
  for (const Tensor& t : model.params) {
    b.vars.push_back(trainable ? tape.variable(t) : tape.constant(t));
  }
  return b;
}

ChoiceOutput choice_forward(const Bound& p, Var x) {
  const ModelConfig& c = p.model->config;
  if (x.value().rank() != 2 || x.dim(1) != c.d) {
    throw ShapeError("choice_forward: expected [B, " + std::to_string(c.d) +
                     "], got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  Var h1 = activate(affine(x, p["choice.w1"], p["choice.b1"]), c.activation);
  Var oh = activate(affine(h1, p["choice.w2"], p["choice.b2"]), c.activation);
  Var score = affine(oh, p["choice.w3"], p["choice.b3"]);

  ChoiceOutput out;
  if (c.mode == SelectionMode::kTopK) {
    out.alpha = add_scalar(softplus(score), kAlphaFloor);
  } else {
    out.alpha = c.score_head == ScoreHead::kSigmoid ? sigmoid(score) : score;
  }
  if (c.nola) return out;

  CorrelationModel& corr = out.correlation;
  corr.factor = reshape(relu(matmul(oh, p["choice.w_l"])),
                        {batch, c.d, c.loading_columns()});
  if (c.mode == SelectionMode::kTopK) {
    corr.form = CovarianceForm::kScaledFactor;
    corr.tau = c.tau;
  } else {
    corr.form = CovarianceForm::kFactorPlusNoise;
    corr.sigma = add_scalar(
        abs(mean_last(tanh(matmul(oh, p["choice.w_sigma"])))), kSigmaFloor);
  }
  return out;
}

namespace {

Var predict_impl(const Bound& p, Var x, Activation a, BatchNormState& bn1,
                 BatchNormState& bn2, bool training) {
  Var h1 = batch_norm(activate(affine(x, p["predict.w1"], p["predict.b1"]), a),
                      p["predict.bn1.gamma"], p["predict.bn1.beta"], bn1, training);
  Var h2 = batch_norm(activate(affine(h1, p["predict.w2"], p["predict.b2"]), a),
                      p["predict.bn2.gamma"], p["predict.bn2.beta"], bn2, training);
  return softmax(affine(h2, p["predict.w3"], p["predict.b3"]), 1.0);
}

}  // namespace

Var predict_forward(const Bound& p, Var x, Model& model, bool training) {
  return predict_impl(p, x, model.config.activation, model.bn1, model.bn2, training);
}

Var predict_forward(const Bound& p, Var x, const Model& model) {
  // Inference mode reads the running statistics without updating them.
  BatchNormState bn1 = model.bn1, bn2 = model.bn2;
  return predict_impl(p, x, model.config.activation, bn1, bn2, false);
}

Var loss_binary(Var probs, std::span<const int> labels, Var soft, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("loss_binary: lambda must be >= 0");
  Var ce = cross_entropy(probs, labels);
  if (lambda == 0.0) return ce;
  return add(ce, scale(mean(sum_last(soft)), lambda));
}

Var loss_topk(Var probs, std::span<const int> labels) {
  return cross_entropy(probs, labels);
}

std::size_t noise_width(const ModelConfig& c) {
  if (c.nola || c.noise_path == NoisePath::kCholesky) return c.d;
  return c.d + c.loading_columns();
}

ForwardResult forward_train(Tape& tape, const Bound& p, Model& model,
                            const Tensor& x, std::span<const int> labels,
                            Rng* rng, const Tensor* zeta,
                            bool batch_norm_training) {
  const ModelConfig& c = model.config;
  const std::size_t batch = x.dim(0);
  if (labels.size() != batch) {
    throw ShapeError("forward_train: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(batch) + " rows");
  }
  if (!zeta && !rng) throw DomainError("forward_train: need rng or fixed noise");
  ForwardResult r;
  Var xv = tape.constant(x);
  r.choice = choice_forward(p, xv);

  Tensor z = zeta ? *zeta : rng->normal_tensor({batch, noise_width(c)});
  if (z.rank() != 2 || z.dim(0) != batch || z.dim(1) != noise_width(c)) {
    throw ShapeError("forward_train: noise must be [" + std::to_string(batch) +
                     ", " + std::to_string(noise_width(c)) + "], got " +
                     shape_string(z.shape()));
  }
  if (c.nola) {
    Var q = tape.constant(z);
    Var u = clamp(normal_cdf(q), kUniformClamp, 1.0 - kUniformClamp);
    r.noise = NoiseDraw{std::move(z), q, u};
  } else if (c.noise_path == NoisePath::kFactor) {
    r.noise = factor_uniform_from(r.choice.correlation, std::move(z));
  } else {
    r.noise = correlated_uniform_from(r.choice.correlation, std::move(z));
  }

  if (c.mode == SelectionMode::kTopK) {
    r.mask = topk_relaxed(r.choice.alpha, r.noise.u, c.sampler);
  } else {
    r.mask = binary_mask(r.choice.alpha, r.noise.u, c.sampler);
  }
  Var gate = r.mask.soft;
  if (c.estimator == MaskEstimator::kStraightThrough) {
    // Forward value is the hard mask; the gradient is that of the soft one.
    Tensor shift = r.mask.hard;
    const auto soft = r.mask.soft.value().data();
    for (std::size_t i = 0; i < shift.size(); ++i) shift[i] -= soft[i];
    gate = add(r.mask.soft, tape.constant(std::move(shift)));
  }
  r.probs = predict_forward(p, mul(xv, gate), model, batch_norm_training);
  r.loss = c.mode == SelectionMode::kTopK
               ? loss_topk(r.probs, labels)
               : loss_binary(r.probs, labels, r.mask.soft, c.sampler.lambda);
  return r;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& s) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) +
                     " gradients for " + std::to_string(params.size()) +
                     " parameters");
  }
  if (s.m.empty()) {
    for (const Tensor& p : params) {
      s.m.emplace_back(p.shape());
      s.v.emplace_back(p.shape());
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    const Tensor& g = grads[k];
    if (g.shape() != p.shape() || s.m[k].shape() != p.shape()) {
      throw ShapeError("adam_step: gradient " + shape_string(g.shape()) +
                       " for parameter " + shape_string(p.shape()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      double& m = s.m[k][i];
      double& v = s.v[k][i];
      m = s.beta1 * m + (1.0 - s.beta1) * g[i];
      v = s.beta2 * v + (1.0 - s.beta2) * g[i] * g[i];
      p[i] -= s.learning_rate * s.weight_decay * p[i];
      p[i] -= s.learning_rate * (m / c1) / (std::sqrt(v / c2) + s.epsilon);
    }
  }
}

void TrainingConfig::validate() const {
  model.validate();
  if (!(learning_rate > 0.0)) throw DomainError("train: learning rate must be > 0");
  if (batch_size < 2) throw DomainError("train: batch size must be >= 2 (batch norm)");
  if (!(weight_decay >= 0.0)) throw DomainError("train: weight decay must be >= 0");
}

TrainResult train(const TrainingConfig& config, const Dataset& data,
                  const EpochCallback& on_epoch) {
  config.validate();
  data.validate();
  if (data.size() < 2) throw DomainError("train: need at least 2 samples");
  if (data.dim() != config.model.d) {
    throw ShapeError("train: data has " + std::to_string(data.dim()) +
                     " features, model expects " + std::to_string(config.model.d));
  }
  if (data.n_classes != config.model.n_classes) {
    throw ShapeError("train: data has " + std::to_string(data.n_classes) +
                     " classes, model expects " +
                     std::to_string(config.model.n_classes));
  }
  const Rng root(config.seed);
  Rng init_rng = root.derive(1);
  Rng order_rng = root.derive(2);
  Rng noise_rng = root.derive(3);

  TrainResult result{init_model(config.model, init_rng), {}};
  Model& model = result.model;
  AdamState adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;

  const std::size_t n = data.size(), d = data.dim();
  std::vector<std::size_t> order(n);
  std::vector<int> labels;
  Tensor xb;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) {  // Fisher-Yates
      std::swap(order[i], order[order_rng.engine()() % (i + 1)]);
    }
    double loss_sum = 0.0, mass_sum = 0.0;
    std::size_t seen = 0, batch_index = 0;
    for (std::size_t lo = 0; lo < n; lo += config.batch_size, ++batch_index) {
      const std::size_t hi = std::min(n, lo + config.batch_size);
      if (hi - lo < 2) break;  // batch norm needs two rows
      xb = Tensor(Shape{hi - lo, d});
      labels.assign(hi - lo, 0);
      for (std::size_t r = lo; r < hi; ++r) {
        std::copy_n(data.x.data().begin() + order[r] * d, d,
                    xb.data().begin() + (r - lo) * d);
        labels[r - lo] = data.y[order[r]];
      }
      try {
        Tape tape;
        Bound bound = bind(tape, model, true);
        ForwardResult fr =
            forward_train(tape, bound, model, xb, labels, &noise_rng);
        tape.backward(fr.loss);
        std::vector<Tensor> grads;
        grads.reserve(bound.vars.size());
        for (Var v : bound.vars) grads.push_back(tape.grad(v));
        adam_step(model.params, grads, adam);
        for (const Tensor& p : model.params) {
          if (!p.all_finite()) throw NonFiniteError("parameter update");
        }
        const double rows = static_cast<double>(hi - lo);
        loss_sum += fr.loss.value().item() * rows;
        for (double s : fr.mask.soft.value().data()) mass_sum += s;
        seen += hi - lo;
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("training diverged at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index) + ": " +
                             e.what());
      } catch (const FactorizationError& e) {
        throw NonFiniteError("training diverged at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index) + ": " +
                             e.what());
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    log.mean_soft_mass = seen ? mass_sum / static_cast<double>(seen) : 0.0;
    log.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0).count();
    log.metric_a = std::nan("");
    log.metric_b = std::nan("");
    if (on_epoch) on_epoch(model, log);
    result.log.push_back(log);
  }
  return result;
}

Inference infer(const Model& model, const Tensor& x, const InferenceOptions& opt) {
  const ModelConfig& c = model.config;
  if (x.rank() != 2 || x.dim(1) != c.d) {
    throw ShapeError("infer: expected [n, " + std::to_string(c.d) + "], got " +
                     shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), d = c.d;
  Inference out{Tensor(Shape{n, d}), Tensor(Shape{n, d}), Tensor(Shape{n, d}),
                Tensor(Shape{n, c.n_classes})};
  Rng rng(opt.seed);
  const std::size_t step = std::max<std::size_t>(opt.batch_size, 1);
  for (std::size_t lo = 0; lo < n; lo += step) {
    const std::size_t hi = std::min(n, lo + step);
    Tape tape;
    Bound p = bind(tape, model, false);
    Tensor xb = rows_of(x, lo, hi);
    Var xv = tape.constant(xb);
    ChoiceOutput ch = choice_forward(p, xv);
    const Tensor& alpha = ch.alpha.value();
    Tensor soft(alpha.shape()), hard(alpha.shape());
    if (c.mode == SelectionMode::kTopK) {
      Var u = tape.constant(Tensor(alpha.shape(), 0.5));
      soft = topk_relaxed(ch.alpha, u, c.sampler).soft.value();
      hard = trunc(alpha, c.sampler.k);
    } else {
      for (std::size_t i = 0; i < alpha.size(); ++i) {
        soft[i] = c.score_head == ScoreHead::kSigmoid
                      ? alpha[i]
                      : marginal_inclusion_probability(alpha[i]);
        hard[i] = opt.bernoulli ? (rng.bernoulli(soft[i]) ? 1.0 : 0.0)
                                : std::nearbyint(soft[i]);
      }
    }
    Tensor masked = xb;
    for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= hard[i];
    Var probs = predict_forward(p, tape.constant(std::move(masked)), model);
    copy_rows(alpha, out.alpha, lo);
    copy_rows(soft, out.soft, lo);
    copy_rows(hard, out.hard, lo);
    copy_rows(probs.value(), out.probs, lo);
  }
  return out;
}

}  // namespace copsel
