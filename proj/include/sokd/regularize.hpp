#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sokd/tensor.hpp"

namespace sokd {

// Per-example running mean of past predictions (temporal ensembling).
class PredictionBuffer {
 public:
  PredictionBuffer() = default;
  PredictionBuffer(std::size_t n_examples, std::size_t K);

  std::size_t size() const { return counts_.size(); }
  std::size_t classes() const { return K_; }
  std::size_t count(std::size_t i) const { return counts_.at(i); }
  // Mean of all recorded predictions for example i (valid when count > 0).
  const double* mean(std::size_t i) const { return means_.data() + i * K_; }

  // mean_i <- (t_i*mean_i + pred) / (t_i + 1); t_i <- t_i + 1
  void update(const std::vector<std::size_t>& example_ids, const std::vector<double>& preds);

  void save(const std::filesystem::path& dir) const;
  static PredictionBuffer load(const std::filesystem::path& dir);

 private:
  std::size_t K_ = 0;
  std::vector<double> means_;        // n x K
  std::vector<std::size_t> counts_;  // n
};

// Mean over the batch of squared L2 distance between current predictions and
// the buffered means; buffer entries are constants. Returns 0 at epoch 0 and
// for examples never yet buffered. grad_out, when given, receives
// d(loss)/d(current) = 2*(current - mean)/batch (0 for unbuffered rows).
double consistency_loss(const std::vector<double>& current_preds,
                        const PredictionBuffer& buffer,
                        const std::vector<std::size_t>& example_ids, std::size_t epoch,
                        std::vector<double>* grad_out = nullptr);

enum class ScheduleKind { linear, cosine, cyclic, piecewise };

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::linear;
  double lambda_max = 1.0;
  std::size_t total_epochs = 1;
};

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Consistency weight at epoch t in [0, T].
double cr_weight(const ScheduleSpec& spec, double t);

}  // namespace sokd
