#include <cmath>
#include <filesystem>
#include <random>
#include <utility>

#include "copsel/config.hpp"
#include "copsel/errors.hpp"
#include "copsel/networks.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace copsel;
using copsel::testing::gradcheck;
using copsel::testing::random_tensor;

namespace {

ModelConfig small_config(SelectionMode mode) {
  ModelConfig c;
  c.mode = mode;
  c.d = 4;
  c.n_classes = 3;
  c.h_c = 5;
  c.h_p = 6;
  c.rank_p = 2;
  c.sampler.temperature = 0.8;
  c.sampler.k = 2;
  c.sampler.lambda = 0.3;
  c.tau = 1.5;
  return c;
}

// Toy data: label = argmax over the first three features.
Dataset toy_data(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Dataset ds;
  ds.n_classes = 3;
  ds.x = random_tensor({n, d}, gen, -1.0, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    int best = 0;
    for (int j = 1; j < 3; ++j) {
      if (ds.x.at(r, j) > ds.x.at(r, best)) best = j;
    }
    ds.y.push_back(best);
  }
  return ds;
}

// Loss as a function of the model parameters at fixed inputs and noise.
copsel::testing::ScalarFn loss_of_params(Model& model, const Tensor& x,
                                         const std::vector<int>& y,
                                         const Tensor& zeta, bool bn_training) {
  return [&model, &x, &y, &zeta, bn_training](Tape& tape,
                                              const std::vector<Var>& vars) {
    Bound b{vars, &model};
    BatchNormState bn1 = model.bn1, bn2 = model.bn2;
    ForwardResult r = forward_train(tape, b, model, x, y, nullptr, &zeta, bn_training);
    model.bn1 = bn1;  // keep running stats fixed across probes
    model.bn2 = bn2;
    return r.loss;
  };
}

}  // namespace

TEST_CASE("constant ChoiceNet gives constant scores") {
  ModelConfig c = small_config(SelectionMode::kBinary);
  Rng rng(1);
  Model m = init_model(c, rng);
  for (const char* name : {"choice.w1", "choice.b1", "choice.w2", "choice.b2",
                           "choice.w3", "choice.b3"}) {
    for (double& v : m.param(name).data()) v = 0.0;
  }
  Tape tape;
  Bound b = bind(tape, m, false);
  std::mt19937_64 gen(2);
  ChoiceOutput out = choice_forward(b, tape.constant(random_tensor({5, 4}, gen)));
  for (double a : out.alpha.value().data()) CHECK(a == 0.0);
}

TEST_CASE("top-k scores are strictly positive") {
  ModelConfig c = small_config(SelectionMode::kTopK);
  Rng rng(3);
  Model m = init_model(c, rng);
  for (double& v : m.param("choice.b3").data()) v = -800.0;
  Tape tape;
  Bound b = bind(tape, m, false);
  std::mt19937_64 gen(4);
  ChoiceOutput out = choice_forward(b, tape.constant(random_tensor({6, 4}, gen)));
  CHECK(out.alpha.shape() == Shape{6, 4});
  for (double a : out.alpha.value().data()) CHECK(a >= kAlphaFloor);
}

TEST_CASE("copula path gradients") {
  for (auto mode : {SelectionMode::kBinary, SelectionMode::kTopK}) {
    for (bool nola : {false, true}) {
      CAPTURE(nola);
      ModelConfig c = small_config(mode);
      c.nola = nola;
      Rng rng(5);
      Model m = init_model(c, rng);
      std::mt19937_64 gen(6);
      const Tensor x = random_tensor({3, 4}, gen);
      const std::vector<int> y = {0, 2, 1};
      Rng noise(7);
      const Tensor zeta = noise.normal_tensor({3, noise_width(c)});
      Tape tape;
      Bound b = bind(tape, m, true);
      ForwardResult r = forward_train(tape, b, m, x, y, nullptr, &zeta);
      tape.backward(r.loss);
      const Tensor g = tape.grad(b["choice.w_l"]);
      double norm = 0.0;
      for (double v : g.data()) norm += std::fabs(v);
      if (nola) {
        CHECK(norm == 0.0);
      } else {
        CHECK(norm > 0.0);
      }
    }
  }
}

TEST_CASE("end-to-end gradients match finite differences") {
  for (auto mode : {SelectionMode::kBinary, SelectionMode::kTopK}) {
    for (auto path : {NoisePath::kCholesky, NoisePath::kFactor}) {
      for (bool single : {true, false}) {
        CAPTURE(static_cast<int>(mode));
        CAPTURE(static_cast<int>(path));
        CAPTURE(single);
        ModelConfig c = small_config(mode);
        c.noise_path = path;
        Rng rng(11);
        Model m = init_model(c, rng);
        // Non-trivial batch-norm state and biases so every path is exercised.
        std::mt19937_64 gen(12);
        for (const char* name : {"choice.b1", "choice.b2", "choice.b3", "predict.b1",
                                 "predict.b2", "predict.bn1.beta"}) {
          m.param(name) = random_tensor(m.param(name).shape(), gen, -0.3, 0.3);
        }
        const std::size_t rows = single ? 1 : 4;
        const Tensor x = random_tensor({rows, 4}, gen);
        std::vector<int> y;
        for (std::size_t r = 0; r < rows; ++r) y.push_back(static_cast<int>(r % 3));
        Rng noise(13);
        const Tensor zeta = noise.normal_tensor({rows, noise_width(c)});
        // A single sample cannot use batch statistics; it runs on the
        // running estimates instead.
        auto res = gradcheck(loss_of_params(m, x, y, zeta, !single), m.params);
        CHECK(res.max_rel_error <= 1e-4);
      }
    }
  }
}

TEST_CASE("straight-through training shows PredictNet the hard mask") {
  for (auto mode : {SelectionMode::kBinary, SelectionMode::kTopK}) {
    CAPTURE(static_cast<int>(mode));
    ModelConfig c = small_config(mode);
    c.estimator = MaskEstimator::kStraightThrough;
    Rng rng(21);
    Model m = init_model(c, rng);
    std::mt19937_64 gen(22);
    const Tensor x = random_tensor({5, 4}, gen);
    const std::vector<int> y = {0, 1, 2, 0, 1};
    Rng noise(23);
    const Tensor zeta = noise.normal_tensor({5, noise_width(c)});
    Tape tape;
    Bound b = bind(tape, m, true);
    ForwardResult r = forward_train(tape, b, m, x, y, nullptr, &zeta, false);

    Tensor masked = x;
    for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= r.mask.hard[i];
    Tape ref_tape;
    Bound ref = bind(ref_tape, m, false);
    const Tensor expected =
        predict_forward(ref, ref_tape.constant(masked), std::as_const(m)).value();
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(r.probs.value()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }

    // Scores still learn through the relaxed mask.
    tape.backward(r.loss);
    double norm = 0.0;
    for (double v : tape.grad(b["choice.w3"]).data()) norm += std::fabs(v);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("PredictNet rows are distributions") {
  ModelConfig c = small_config(SelectionMode::kBinary);
  Rng rng(17);
  Model m = init_model(c, rng);
  std::mt19937_64 gen(18);
  Tape tape;
  Bound b = bind(tape, m, false);
  Tensor probs = predict_forward(b, tape.constant(random_tensor({50, 4}, gen, -5, 5)),
                                 m, true).value();
  for (std::size_t r = 0; r < 50; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += probs.at(r, j);
    CHECK(std::fabs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("losses") {
  Tape tape;
  const std::vector<int> y = {0, 1};
  Var perfect = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var zeros = tape.constant(Tensor(Shape{2, 3}, 0.0));
  Var ones = tape.constant(Tensor(Shape{2, 3}, 1.0));
  CHECK(loss_binary(perfect, y, zeros, 0.0).value().item() == 0.0);
  CHECK(loss_binary(perfect, y, ones, 0.7).value().item() == doctest::Approx(0.7 * 3));
  Var uneven = tape.constant(Tensor::matrix({{0.3, 0.7}, {0.6, 0.4}}));
  CHECK(loss_binary(uneven, y, ones, 0.0).value().item() ==
        cross_entropy(uneven, y).value().item());
  CHECK_THROWS_AS(loss_binary(uneven, y, ones, -1.0), DomainError);

  Var uniform = tape.constant(Tensor(Shape{2, 5}, 0.2));
  CHECK(loss_topk(uniform, y).value().item() == doctest::Approx(std::log(5.0)));
  CHECK(loss_topk(perfect, y).value().item() == 0.0);

  std::mt19937_64 gen(19);
  const Tensor logits = random_tensor({4, 3}, gen, -3, 3);
  Tensor shifted = logits;
  for (double& v : shifted.data()) v += 11.5;
  const std::vector<int> y4 = {0, 2, 1, 1};
  const double a = loss_topk(softmax(tape.constant(logits), 1.0), y4).value().item();
  const double b = loss_topk(softmax(tape.constant(shifted), 1.0), y4).value().item();
  CHECK(std::fabs(a - b) <= 1e-9);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient is a fixed point") {
    std::vector<Tensor> p = {Tensor::vector({1.0, -2.0})};
    AdamState s;
    s.learning_rate = 0.1;
    for (int i = 0; i < 5; ++i) adam_step(p, {Tensor(Shape{2})}, s);
    CHECK(p[0].values() == std::vector<double>{1.0, -2.0});
  }
  SUBCASE("first step moves lr against the gradient sign") {
    std::vector<Tensor> p = {Tensor::vector({0.0, 0.0, 0.0})};
    AdamState s;
    s.learning_rate = 0.01;
    adam_step(p, {Tensor::vector({3.0, -0.2, 1e-3})}, s);
    CHECK(p[0][0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p[0][1] == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p[0][2] == doctest::Approx(-0.01).epsilon(1e-4));
  }
  SUBCASE("quadratic bowl") {
    std::vector<Tensor> p = {Tensor::scalar(1.5)};
    AdamState s;
    s.learning_rate = 0.01;
    double previous = std::fabs(p[0].item());
    for (int i = 0; i < 100; ++i) {
      adam_step(p, {Tensor::scalar(2.0 * p[0].item())}, s);
      CHECK(std::fabs(p[0].item()) < previous);
      previous = std::fabs(p[0].item());
    }
  }
  SUBCASE("decoupled weight decay") {
    std::vector<Tensor> p = {Tensor::scalar(2.0)};
    AdamState s;
    s.learning_rate = 0.1;
    s.weight_decay = 0.5;
    adam_step(p, {Tensor::scalar(0.0)}, s);
    CHECK(p[0].item() == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  }
  SUBCASE("shape mismatch") {
    std::vector<Tensor> p = {Tensor::vector({1.0, 2.0})};
    AdamState s;
    CHECK_THROWS_AS(adam_step(p, {Tensor::vector({1.0})}, s), ShapeError);
  }
}

TEST_CASE("with an all-ones mask the classifier fits separable data") {
  ModelConfig c = small_config(SelectionMode::kBinary);
  c.n_classes = 2;
  c.h_p = 16;
  Rng rng(23);
  Model m = init_model(c, rng);
  std::mt19937_64 gen(24);
  const Tensor x = random_tensor({64, 4}, gen);
  std::vector<int> y;
  for (std::size_t r = 0; r < 64; ++r) {
    y.push_back(x.at(r, 0) + 0.5 * x.at(r, 1) > 0.0 ? 1 : 0);
  }
  AdamState adam;
  adam.learning_rate = 0.01;
  double loss = 1e9;
  for (int epoch = 0; epoch < 200; ++epoch) {
    Tape tape;
    Bound b = bind(tape, m, true);
    Var l = loss_topk(predict_forward(b, tape.constant(x), m, true), y);
    tape.backward(l);
    std::vector<Tensor> grads;
    for (Var v : b.vars) grads.push_back(tape.grad(v));
    adam_step(m.params, grads, adam);
    loss = l.value().item();
  }
  CHECK(loss <= 0.05);
}

TEST_CASE("training is deterministic and reports progress") {
  TrainingConfig tc;
  tc.model = small_config(SelectionMode::kBinary);
  tc.model.d = 6;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.learning_rate = 1e-2;
  tc.seed = 99;
  const Dataset data = toy_data(50, 6, 5);
  std::size_t callbacks = 0;
  TrainResult a = train(tc, data, [&](const Model&, EpochLog& log) {
    ++callbacks;
    log.metric_a = 1.0;
  });
  TrainResult b = train(tc, data);
  CHECK(callbacks == 2);
  REQUIRE(a.log.size() == 2);
  CHECK(a.log[1].metric_a == 1.0);
  CHECK(std::isnan(b.log[1].metric_a));
  for (std::size_t k = 0; k < a.model.params.size(); ++k) {
    CHECK(a.model.params[k].values() == b.model.params[k].values());
  }
  CHECK(a.log[0].loss == b.log[0].loss);
  CHECK(a.model.bn1.running_mean == b.model.bn1.running_mean);

  tc.seed = 100;
  TrainResult c = train(tc, data);
  CHECK(c.model.params[0].values() != a.model.params[0].values());
}

TEST_CASE("a dominant penalty drives the selection to nothing") {
  TrainingConfig tc;
  tc.model = small_config(SelectionMode::kBinary);
  tc.model.d = 6;
  tc.model.sampler.lambda = 50.0;
  tc.model.sampler.temperature = 1.0;
  tc.epochs = 60;
  tc.batch_size = 32;
  tc.learning_rate = 1e-2;
  tc.weight_decay = 0.0;
  const Dataset data = toy_data(128, 6, 8);
  TrainResult r = train(tc, data);
  Inference inf = infer(r.model, data.x);
  double selected = 0.0;
  for (double h : inf.hard.data()) selected += h;
  CHECK(selected / 128.0 <= 0.1);
  CHECK(r.log.back().mean_soft_mass < r.log.front().mean_soft_mass);
}

TEST_CASE("non-finite training aborts with its location") {
  TrainingConfig tc;
  tc.model = small_config(SelectionMode::kBinary);
  tc.epochs = 1;
  tc.batch_size = 4;
  Dataset data = toy_data(8, 4, 2);
  data.x.at(5, 1) = 1e308;
  try {
    train(tc, data);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("inference") {
  SUBCASE("binary, zero scores round half to even") {
    ModelConfig c = small_config(SelectionMode::kBinary);
    Rng rng(29);
    Model m = init_model(c, rng);
    for (const char* name : {"choice.w3", "choice.b3"}) {
      for (double& v : m.param(name).data()) v = 0.0;
    }
    std::mt19937_64 gen(30);
    Inference inf = infer(m, random_tensor({7, 4}, gen));
    for (double s : inf.soft.data()) CHECK(s == 0.5);
    for (double h : inf.hard.data()) CHECK(h == 0.0);
  }
  SUBCASE("sigmoid head reads alpha as the inclusion probability") {
    ModelConfig c = small_config(SelectionMode::kBinary);
    c.score_head = ScoreHead::kSigmoid;
    Rng rng(33);
    Model m = init_model(c, rng);
    for (double& v : m.param("choice.w3").data()) v = 0.0;
    m.param("choice.b3") = Tensor::vector({2.0, -1.0, 0.5, -3.0});
    std::mt19937_64 gen(34);
    Inference inf = infer(m, random_tensor({2, 4}, gen));
    for (std::size_t i = 0; i < 4; ++i) CHECK(inf.soft[i] == inf.alpha[i]);
    CHECK(std::vector<double>(inf.hard.data().begin(), inf.hard.data().begin() + 4) ==
          std::vector<double>{1, 0, 1, 0});
  }
  SUBCASE("binary follows the sign of the log-odds") {
    ModelConfig c = small_config(SelectionMode::kBinary);
    Rng rng(31);
    Model m = init_model(c, rng);
    for (double& v : m.param("choice.w3").data()) v = 0.0;
    m.param("choice.b3") = Tensor::vector({2.0, -1.0, 0.5, -3.0});
    std::mt19937_64 gen(32);
    Inference inf = infer(m, random_tensor({3, 4}, gen));
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(std::vector<double>(inf.hard.data().begin() + r * 4,
                                inf.hard.data().begin() + r * 4 + 4) ==
            std::vector<double>{1, 0, 1, 0});
    }
    InferenceOptions bern;
    bern.bernoulli = true;
    bern.seed = 4;
    Inference sampled = infer(m, Tensor(Shape{4000, 4}, 0.1), bern);
    double first = 0.0;
    for (std::size_t r = 0; r < 4000; ++r) first += sampled.hard.at(r, 0);
    CHECK(std::fabs(first / 4000.0 - marginal_inclusion_probability(2.0)) <= 0.03);
  }
  SUBCASE("top-k picks the largest scores and is repeatable") {
    ModelConfig c = small_config(SelectionMode::kTopK);
    Rng rng(33);
    Model m = init_model(c, rng);
    std::mt19937_64 gen(34);
    const Tensor x = random_tensor({20, 4}, gen);
    Inference a = infer(m, x);
    Inference b = infer(m, x);
    CHECK(a.hard.values() == b.hard.values());
    CHECK(a.probs.values() == b.probs.values());
    CHECK(trunc(a.alpha, 2).values() == a.hard.values());
    for (std::size_t r = 0; r < 20; ++r) {
      double s = 0.0, h = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        s += a.soft.at(r, i);
        h += a.hard.at(r, i);
      }
      CHECK(h == 2.0);
      CHECK(std::fabs(s - 2.0) <= 1e-6);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "copsel_ckpt_test";
  std::filesystem::remove_all(dir);
  TrainingConfig tc;
  tc.model = small_config(SelectionMode::kTopK);
  tc.model.rank = RankMode::kFull;
  tc.epochs = 1;
  tc.batch_size = 8;
  TrainResult r = train(tc, toy_data(24, 4, 3));
  save_checkpoint(r.model, dir);
  Model loaded = load_checkpoint(dir);
  CHECK(loaded.names == r.model.names);
  for (std::size_t k = 0; k < loaded.params.size(); ++k) {
    CHECK(loaded.params[k].values() == r.model.params[k].values());
  }
  CHECK(loaded.bn2.running_var == r.model.bn2.running_var);
  CHECK(to_json(loaded.config) == to_json(r.model.config));
  std::mt19937_64 gen(1);
  const Tensor x = random_tensor({5, 4}, gen);
  CHECK(infer(loaded, x).probs.values() == infer(r.model, x).probs.values());

  // Truncated parameter file.
  std::filesystem::resize_file(dir / "params.bin", 16);
  CHECK_THROWS_AS(load_checkpoint(dir), FormatError);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_checkpoint(dir), IoError);
}

TEST_CASE("config JSON round trip") {
  TrainingConfig tc;
  tc.model = small_config(SelectionMode::kTopK);
  tc.model.activation = Activation::kRelu;
  tc.model.score_head = ScoreHead::kSigmoid;
  tc.model.noise_path = NoisePath::kFactor;
  tc.model.nola = true;
  tc.model.estimator = MaskEstimator::kStraightThrough;
  tc.seed = 1234567890123ULL;
  tc.learning_rate = 3e-4;
  const Json j = to_json(tc);
  const TrainingConfig back = training_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(to_json(training_config_from_json(Json::parse(j.dump()))) == j);
  CHECK_THROWS_AS(model_config_from_json(Json{{"mode", "sideways"}}), FormatError);
  CHECK_THROWS_AS(model_config_from_json(Json{{"d", "eleven"}}), FormatError);
  CHECK_THROWS_AS(model_config_from_json(Json{{"mask_estimator", "hard"}}), FormatError);
  CHECK(config_hash(j) == config_hash(to_json(back)));
}
