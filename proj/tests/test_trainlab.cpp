#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sokd/trainlab.hpp"

using namespace sokd;
namespace fs = std::filesystem;

namespace {

// Two well-separated features with deterministic labels: linearly separable.
FeatureVocabulary toy_vocabulary() {
  FeatureVocabulary v;
  v.K = 2;
  v.b = 2;
  FeatureSpec f0;
  f0.name = "left";
  f0.label_distribution = {1.0, 0.0};
  f0.representation_mean = {1.0, 0.5};
  f0.representation_scale = 0.05;
  FeatureSpec f1;
  f1.name = "right";
  f1.label_distribution = {0.0, 1.0};
  f1.representation_mean = {-1.0, -0.5};
  f1.representation_scale = 0.05;
  v.features = {f0, f1};
  v.sampling_weights = {0.5, 0.5};
  return v;
}

MixedFeatureDataset toy_dataset(std::size_t N = 200, std::uint64_t seed = 3) {
  auto ds = sample_dataset(toy_vocabulary(), N, 1, TransformSet::identity(2), seed);
  ds.assign_splits_modular();
  return ds;
}

}  // namespace

TEST_CASE("mode contract for the regularizer weights") {
  TeacherTrainConfig cfg;
  cfg.lambda_lr = 1e-5;
  cfg.epochs = 10;
  cfg.cr_schedule = {ScheduleKind::linear, 1.0, 10};

  cfg.mode = TeacherMode::standard;
  CHECK(cfg.effective_lambda_lr() == 0.0);
  CHECK(cfg.effective_lambda_cr(10) == 0.0);

  cfg.mode = TeacherMode::soteacher;
  CHECK(cfg.effective_lambda_lr() == doctest::Approx(1e-5));
  CHECK(cfg.effective_lambda_cr(10) == doctest::Approx(1.0));
  CHECK(cfg.effective_lambda_cr(5) == doctest::Approx(0.5));

  cfg.mode = TeacherMode::no_lr;
  CHECK(cfg.effective_lambda_lr() == 0.0);
  CHECK(cfg.effective_lambda_cr(10) == doctest::Approx(1.0));

  cfg.mode = TeacherMode::no_cr;
  CHECK(cfg.effective_lambda_lr() == doctest::Approx(1e-5));
  CHECK(cfg.effective_lambda_cr(10) == 0.0);
}

TEST_CASE("mode names round trip") {
  for (auto m : {TeacherMode::standard, TeacherMode::soteacher, TeacherMode::no_lr,
                 TeacherMode::no_cr})
    CHECK(teacher_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(teacher_mode_from_string("oracle"), std::invalid_argument);
}

TEST_CASE("kd loss with alpha=1 is plain cross entropy, teacher independent") {
  std::vector<double> logits = {0.4, -0.2, 1.1};
  std::vector<double> t1 = {0.2, 0.3, 0.5};
  std::vector<double> t2 = {0.98, 0.01, 0.01};
  double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0;
  for (double h : logits) denom += std::exp(h - mx);
  double expected = -(logits[2] - mx - std::log(denom));
  CHECK(kd_loss(logits, t1, 2, 1.0, 4.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(kd_loss(logits, t1, 2, 1.0, 4.0) ==
        doctest::Approx(kd_loss(logits, t2, 2, 1.0, 4.0)).epsilon(1e-12));
}

TEST_CASE("kd loss with alpha=0 vanishes when the student matches the teacher") {
  std::vector<double> tp = {0.7, 0.2, 0.1};
  // student logits equal to the zero-mean teacher log probabilities; after
  // dividing by tau both sides produce the same tempered distribution
  std::vector<double> logits(3);
  double mean = 0;
  for (int k = 0; k < 3; ++k) {
    logits[k] = std::log(tp[k] + 1e-12);
    mean += logits[k];
  }
  mean /= 3;
  for (double& v : logits) v -= mean;
  std::vector<double> grad;
  CHECK(kd_loss(logits, tp, 0, 0.0, 4.0, &grad) == doctest::Approx(0.0).epsilon(1e-9));
  for (double g : grad) CHECK(std::fabs(g) < 1e-9);
}

TEST_CASE("kd gradient matches finite differences") {
  std::vector<double> logits = {0.3, -0.8, 0.5, 1.2};
  std::vector<double> tp = {0.4, 0.1, 0.3, 0.2};
  std::vector<double> grad;
  kd_loss(logits, tp, 1, 0.5, 4.0, &grad);
  const double eps = 1e-6;
  for (std::size_t k = 0; k < 4; ++k) {
    auto up = logits, down = logits;
    up[k] += eps;
    down[k] -= eps;
    double fd = (kd_loss(up, tp, 1, 0.5, 4.0) - kd_loss(down, tp, 1, 0.5, 4.0)) / (2 * eps);
    CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("kd loss validates its arguments") {
  CHECK_THROWS_AS(kd_loss({1.0, 2.0}, {0.5, 0.3, 0.2}, 0, 0.5, 4.0), ShapeError);
  CHECK_THROWS_AS(kd_loss({1.0, 2.0}, {0.5, 0.5}, 0, 1.5, 4.0), std::invalid_argument);
  CHECK_THROWS_AS(kd_loss({1.0, 2.0}, {0.5, 0.5}, 0, 0.5, 0.0), std::invalid_argument);
}

TEST_CASE("teacher fits a separable toy problem") {
  auto data = toy_dataset();
  NetworkDims dims{1, 2, {8}, 0, 2};
  Network net = make_mlp(dims, 5);
  TeacherTrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 32;
  cfg.mode = TeacherMode::standard;
  cfg.seed = 5;
  cfg.optimizer.learning_rate0 = 0.1;
  RunRecord rec = train_teacher(net, data, cfg);
  CHECK(rec.final_train_acc == doctest::Approx(1.0));
  CHECK(rec.epochs.size() == 20);
}

TEST_CASE("patchwise teacher fits the same toy problem") {
  auto data = toy_dataset();
  NetworkDims dims{1, 2, {8}, 4, 2};
  Network net = make_patchwise(dims, 6);
  TeacherTrainConfig cfg;
  cfg.epochs = 25;
  cfg.batch_size = 32;
  cfg.mode = TeacherMode::soteacher;
  cfg.seed = 6;
  cfg.optimizer.learning_rate0 = 0.1;
  RunRecord rec = train_teacher(net, data, cfg);
  CHECK(rec.final_train_acc > 0.98);
}

TEST_CASE("epoch ledger identity holds") {
  auto data = toy_dataset(120);
  NetworkDims dims{1, 2, {6}, 3, 2};
  Network net = make_patchwise(dims, 7);
  TeacherTrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 40;
  cfg.mode = TeacherMode::soteacher;
  cfg.seed = 7;
  RunRecord rec = train_teacher(net, data, cfg);
  for (const auto& e : rec.epochs) {
    double expected = e.ce + cfg.effective_lambda_lr() * e.lr_penalty + e.lambda_cr * e.cr_penalty;
    CHECK(e.total == doctest::Approx(expected).epsilon(1e-12));
    CHECK(e.lambda_cr == doctest::Approx(cfg.effective_lambda_cr(e.epoch)));
    if (e.epoch == 0) CHECK(e.cr_penalty == 0.0);
  }
}

TEST_CASE("training is deterministic in the seed") {
  auto run = [] {
    auto data = toy_dataset(100);
    NetworkDims dims{1, 2, {4}, 0, 2};
    Network net = make_mlp(dims, 11);
    TeacherTrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 16;
    cfg.seed = 11;
    train_teacher(net, data, cfg);
    std::vector<double> flat;
    for (const auto& p : net.params)
      flat.insert(flat.end(), p.tensor.values().begin(), p.tensor.values().end());
    return flat;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoints land on the configured epochs and are loadable") {
  auto data = toy_dataset(80);
  NetworkDims dims{1, 2, {4}, 0, 2};
  Network net = make_mlp(dims, 13);
  TeacherTrainConfig cfg;
  cfg.epochs = 7;
  cfg.checkpoint_every = 3;
  cfg.batch_size = 16;
  cfg.seed = 13;
  auto dir = fs::temp_directory_path() / "sokd_test_teacher_run";
  fs::remove_all(dir);
  RunRecord rec = train_teacher(net, data, cfg, dir);
  REQUIRE(rec.checkpoint_paths.size() == 3);  // epochs 3, 6 and the final 7
  CHECK(fs::path(rec.checkpoint_paths[0]).filename() == "ckpt-3");
  CHECK(fs::path(rec.checkpoint_paths[1]).filename() == "ckpt-6");
  CHECK(fs::path(rec.checkpoint_paths[2]).filename() == "ckpt-7");
  CheckpointMeta meta;
  Network last = load_network(rec.checkpoint_paths.back(), &meta);
  CHECK(meta.epoch == 7);
  for (std::size_t i = 0; i < net.params.size(); ++i)
    CHECK(last.params[i].tensor.values() == net.params[i].tensor.values());
  PredictionBuffer buf = PredictionBuffer::load(rec.checkpoint_paths.back());
  CHECK(buf.size() == data.size());
  rec.save(dir);
  CHECK(fs::exists(dir / "run_record.json"));
  CHECK(fs::exists(dir / "epochs.csv"));
  fs::remove_all(dir);
}

TEST_CASE("distilled student recovers the toy task and agrees with its teacher") {
  auto data = toy_dataset(200);
  NetworkDims tdims{1, 2, {8}, 0, 2};
  Network teacher = make_mlp(tdims, 17);
  TeacherTrainConfig tcfg;
  tcfg.epochs = 20;
  tcfg.batch_size = 32;
  tcfg.mode = TeacherMode::standard;
  tcfg.seed = 17;
  tcfg.optimizer.learning_rate0 = 0.1;
  train_teacher(teacher, data, tcfg);

  NetworkDims sdims{1, 2, {4}, 0, 2};
  Network student = make_mlp(sdims, 18);
  DistillConfig scfg;
  scfg.epochs = 15;
  scfg.batch_size = 32;
  scfg.seed = 18;
  scfg.optimizer.learning_rate0 = 0.1;
  RunRecord rec = train_student(student, teacher, data, scfg);
  CHECK(rec.final_train_acc > 0.98);

  // top-1 agreement between student and teacher over the whole set
  std::size_t agree = 0;
  for (const auto& ex : data.examples) {
    auto sp = predict_renormalized(student, ex.patches);
    auto tp = predict_renormalized(teacher, ex.patches);
    std::size_t sa = sp[1] > sp[0] ? 1 : 0, ta = tp[1] > tp[0] ? 1 : 0;
    if (sa == ta) ++agree;
  }
  CHECK(static_cast<double>(agree) / data.size() > 0.98);
}

TEST_CASE("alpha=1 distillation ignores the teacher entirely") {
  auto data = toy_dataset(100);
  auto run = [&](std::uint64_t teacher_seed) {
    NetworkDims tdims{1, 2, {8}, 0, 2};
    Network teacher = make_mlp(tdims, teacher_seed);
    NetworkDims sdims{1, 2, {4}, 0, 2};
    Network student = make_mlp(sdims, 21);
    DistillConfig cfg;
    cfg.alpha = 1.0;
    cfg.epochs = 3;
    cfg.batch_size = 20;
    cfg.seed = 21;
    train_student(student, teacher, data, cfg);
    std::vector<double> flat;
    for (const auto& p : student.params)
      flat.insert(flat.end(), p.tensor.values().begin(), p.tensor.values().end());
    return flat;
  };
  auto a = run(100);
  auto b = run(200);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
}

TEST_CASE("accuracy falls back to all examples when the split is empty") {
  auto data = toy_dataset(50);
  data.split_tags.assign(data.size(), Split::train);
  NetworkDims dims{1, 2, {4}, 0, 2};
  Network net = make_mlp(dims, 23);
  double acc = accuracy(net, data, Split::test);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}
