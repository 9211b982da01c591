#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "sokd/rng.hpp"
#include "sokd/tape.hpp"
#include "sokd/tensor.hpp"

using namespace sokd;

namespace {

// Central finite differences over every entry of every parameter.
double max_relative_fd_error(std::vector<Parameter>& params,
                             const std::function<double(std::vector<Parameter>&, bool)>& run,
                             double eps = 1e-5) {
  for (auto& p : params) p.zero_grad();
  run(params, true);  // fills gradients
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.tensor.size(); ++i) {
      double orig = p.tensor[i];
      p.tensor[i] = orig + eps;
      double up = run(params, false);
      p.tensor[i] = orig - eps;
      double down = run(params, false);
      p.tensor[i] = orig;
      double fd = (up - down) / (2 * eps);
      double ad = p.gradient[i];
      // floor guards against FD roundoff (~1e-10 absolute at eps = 1e-5)
      double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-4});
      worst = std::max(worst, std::fabs(fd - ad) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("sum of squares gradient") {
  std::vector<Parameter> params;
  params.emplace_back("p", Tensor::vector({3.0}));
  Tape tape;
  auto loss = tape.sum(tape.square(tape.param(params[0])));
  double v = tape.backward(loss);
  CHECK(v == doctest::Approx(9.0));
  CHECK(params[0].gradient[0] == doctest::Approx(6.0));
}

TEST_CASE("mean of relu gradient") {
  std::vector<Parameter> params;
  params.emplace_back("p", Tensor::vector({-1.0, 2.0}));
  Tape tape;
  auto loss = tape.mean(tape.relu(tape.param(params[0])));
  tape.backward(loss);
  CHECK(params[0].gradient[0] == doctest::Approx(0.0));
  CHECK(params[0].gradient[1] == doctest::Approx(0.5));
}

TEST_CASE("two-layer net matches central finite differences") {
  Rng rng(7);
  std::vector<Parameter> params;
  Tensor w1 = Tensor::matrix(3, 4);
  for (auto& v : w1.values()) v = rng.uniform(-1, 1);
  Tensor w2 = Tensor::matrix(4, 2);
  for (auto& v : w2.values()) v = rng.uniform(-1, 1);
  params.emplace_back("w1", w1);
  params.emplace_back("w2", w2);
  Tensor x = Tensor::matrix(5, 3);
  for (auto& v : x.values()) v = rng.uniform(-1, 1);
  Tensor y = Tensor::matrix(5, 2);
  for (std::size_t i = 0; i < 5; ++i) y.at(i, i % 2) = 1.0;

  auto run = [&](std::vector<Parameter>& ps, bool grad) {
    Tape tape;
    auto h = tape.relu(tape.matmul(tape.constant(x), tape.param(ps[0])));
    auto logits = tape.matmul(h, tape.param(ps[1]));
    auto logp = tape.log(tape.softmax(logits));
    auto loss = tape.scale(tape.sum(tape.mul(logp, tape.constant(y))), -0.2);
    if (grad) return tape.backward(loss);
    return tape.value(loss)[0];
  };
  CHECK(max_relative_fd_error(params, run) < 1e-5);
}

TEST_CASE("gradient exactness property over random graphs") {
  // >= 100 random compositions of the supported primitives
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(1000 + trial);
    std::size_t in = 2 + rng.uniform_index(3);
    std::size_t hid = 2 + rng.uniform_index(4);
    std::size_t out = 2 + rng.uniform_index(3);
    std::size_t batch = 1 + rng.uniform_index(4);
    std::vector<Parameter> params;
    Tensor w1 = Tensor::matrix(in, hid);
    for (auto& v : w1.values()) v = rng.uniform(-1, 1);
    Tensor b1 = Tensor({hid});
    for (auto& v : b1.values()) v = rng.uniform(-0.5, 0.5);
    Tensor w2 = Tensor::matrix(hid, out);
    for (auto& v : w2.values()) v = rng.uniform(-1, 1);
    params.emplace_back("w1", w1);
    params.emplace_back("b1", b1);
    params.emplace_back("w2", w2);
    Tensor x = Tensor::matrix(batch, in);
    for (auto& v : x.values()) v = rng.uniform(-1, 1);
    std::size_t flavour = rng.uniform_index(5);

    auto run = [&, flavour](std::vector<Parameter>& ps, bool grad) {
      Tape tape;
      auto h = tape.relu(tape.add(tape.matmul(tape.constant(x), tape.param(ps[0])),
                                  tape.param(ps[1])));
      auto logits = tape.matmul(h, tape.param(ps[2]));
      Tape::Id loss;
      switch (flavour) {
        case 0: loss = tape.mean(tape.square(logits)); break;
        case 1: loss = tape.sum(tape.abs(tape.softmax(logits))); break;
        case 2: loss = tape.mean(tape.log(tape.softmax(logits))); break;
        case 3: loss = tape.sum(tape.mul(logits, logits)); break;
        default: loss = tape.mean(tape.exp(tape.scale(logits, 0.3))); break;
      }
      if (grad) return tape.backward(loss);
      return tape.value(loss)[0];
    };
    CAPTURE(trial);
    CHECK(max_relative_fd_error(params, run) < 1e-5);
  }
}

TEST_CASE("max_reduce routes gradient to lowest-index max") {
  std::vector<Parameter> params;
  params.emplace_back("p", Tensor::vector({1.0, 3.0, 3.0}));
  Tape tape;
  auto loss = tape.max_reduce(tape.param(params[0]));
  double v = tape.backward(loss);
  CHECK(v == doctest::Approx(3.0));
  CHECK(params[0].gradient[0] == 0.0);
  CHECK(params[0].gradient[1] == 1.0);
  CHECK(params[0].gradient[2] == 0.0);
}

TEST_CASE("shape mismatch raises descriptive error") {
  Tape tape;
  auto a = tape.constant(Tensor::matrix(2, 3));
  auto b = tape.constant(Tensor::matrix(2, 3));
  CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);
}

TEST_CASE("non-finite value raises NumericError") {
  Tape tape;
  auto a = tape.constant(Tensor::vector({1000.0}));
  CHECK_THROWS_AS(tape.exp(a), NumericError);
}

TEST_CASE("sgd vanilla step") {
  std::vector<Parameter> params;
  params.emplace_back("p", Tensor::vector({1.0}));
  params[0].gradient[0] = 1.0;
  OptimizerConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  sgd_step(params, 0.1, cfg);
  CHECK(params[0].tensor[0] == doctest::Approx(0.9));
}

TEST_CASE("sgd momentum recurrence") {
  std::vector<Parameter> params;
  params.emplace_back("p", Tensor::vector({1.0}));
  params[0].momentum_state[0] = 1.0;
  params[0].gradient[0] = 0.0;
  OptimizerConfig cfg;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  sgd_step(params, 0.1, cfg);
  CHECK(params[0].tensor[0] == doctest::Approx(0.91));
}

TEST_CASE("weight decay constant from the training recipe") {
  std::vector<Parameter> params;
  params.emplace_back("p", Tensor::vector({1.0}));
  params[0].gradient[0] = 0.0;
  OptimizerConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0005;
  sgd_step(params, 1.0, cfg);
  CHECK(params[0].tensor[0] == doctest::Approx(0.9995));
}

TEST_CASE("lr_at step decay") {
  OptimizerConfig cfg;
  cfg.learning_rate0 = 0.05;
  cfg.decay_milestones = {150, 180, 210};
  cfg.decay_factor = 0.1;
  CHECK(lr_at(0, cfg) == doctest::Approx(0.05));
  CHECK(lr_at(185, cfg) == doctest::Approx(0.0005));
  OptimizerConfig flat;
  flat.decay_milestones = {};
  CHECK(lr_at(0, flat) == lr_at(999, flat));
}

TEST_CASE("lr_at is non-increasing in epoch") {
  OptimizerConfig cfg;
  cfg.decay_milestones = {3, 7, 11};
  cfg.decay_factor = 0.5;
  double prev = lr_at(0, cfg);
  for (std::size_t e = 1; e < 20; ++e) {
    double cur = lr_at(e, cfg);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("deterministic parameter trajectory from identical seed") {
  auto run = [] {
    Rng rng(42);
    std::vector<Parameter> params;
    Tensor w = Tensor::matrix(2, 2);
    for (auto& v : w.values()) v = rng.uniform(-1, 1);
    params.emplace_back("w", w);
    OptimizerConfig cfg;
    for (int step = 0; step < 10; ++step) {
      Tape tape;
      auto loss = tape.mean(tape.square(tape.param(params[0])));
      params[0].zero_grad();
      tape.backward(loss);
      sgd_step(params, lr_at(step, cfg), cfg);
    }
    return params[0].tensor.values();
  };
  CHECK(run() == run());
}
