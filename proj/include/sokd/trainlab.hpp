#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sokd/datagen.hpp"
#include "sokd/netlib.hpp"
#include "sokd/regularize.hpp"
#include "sokd/tensor.hpp"

namespace sokd {

enum class TeacherMode { standard, soteacher, no_lr, no_cr };

TeacherMode teacher_mode_from_string(const std::string& s);
std::string to_string(TeacherMode m);

struct TeacherTrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  double lambda_lr = 1e-5;
  ScheduleSpec cr_schedule{ScheduleKind::linear, 1.0, 40};
  TeacherMode mode = TeacherMode::soteacher;
  std::size_t checkpoint_every = 10;
  std::uint64_t seed = 0;
  // re-sample a transform per patch per epoch when the dataset's transform
  // set is non-degenerate
  bool augment = true;

  double effective_lambda_lr() const;
  double effective_lambda_cr(double epoch) const;
};

struct DistillConfig {
  double alpha = 0.5;
  double temperature = 4.0;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  bool augment = true;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0, ce = 0, lr_penalty = 0, cr_penalty = 0, lambda_cr = 0, total = 0;
  double train_acc = 0, test_acc = 0;
};

struct RunRecord {
  std::vector<EpochLog> epochs;
  std::vector<std::string> checkpoint_paths;
  double final_test_acc = 0.0;
  double final_train_acc = 0.0;

  std::string to_json() const;
  std::string to_csv() const;
  void save(const std::filesystem::path& dir) const;
};

// Cross-entropy plus mode-dependent Lipschitz/consistency regularization;
// checkpoints (weights + prediction buffer) saved every checkpoint_every
// epochs and at the end when out_dir is given.
RunRecord train_teacher(Network& net, const MixedFeatureDataset& data,
                        const TeacherTrainConfig& cfg,
                        const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// alpha*CE(student, y) + (1-alpha)*tau^2*KL(teacher_tau || student_tau).
// Teacher logits are recovered as log(prob + 1e-12), shifted to zero mean
// per example so the tau-scaled softmax is well defined.
double kd_loss(const std::vector<double>& student_logits, const std::vector<double>& teacher_probs,
               std::size_t label, double alpha, double tau,
               std::vector<double>* grad_logits = nullptr);

// Vanilla knowledge distillation from a frozen teacher.
RunRecord train_student(Network& student, const Network& teacher, const MixedFeatureDataset& data,
                        const DistillConfig& cfg);

// Accuracy of the (renormalized) prediction over the given split; uses all
// examples when the split is empty.
double accuracy(const Network& net, const MixedFeatureDataset& data, Split split);

// Renormalized predictions over a set of example indices (n x K, row-major).
std::vector<double> batch_predict(const Network& net, const MixedFeatureDataset& data,
                                  const std::vector<std::size_t>& idx);

}  // namespace sokd
