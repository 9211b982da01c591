#include "sokd/regularize.hpp"

#include <cmath>
#include <stdexcept>

#include "sokd/io.hpp"

namespace sokd {

PredictionBuffer::PredictionBuffer(std::size_t n_examples, std::size_t K)
    : K_(K), means_(n_examples * K, 0.0), counts_(n_examples, 0) {}

void PredictionBuffer::update(const std::vector<std::size_t>& example_ids,
                              const std::vector<double>& preds) {
  if (preds.size() != example_ids.size() * K_)
    throw ShapeError("PredictionBuffer::update: prediction block size mismatch");
  for (std::size_t r = 0; r < example_ids.size(); ++r) {
    std::size_t i = example_ids[r];
    if (i >= counts_.size())
      throw std::out_of_range("PredictionBuffer::update: example id out of range");
    double t = static_cast<double>(counts_[i]);
    for (std::size_t k = 0; k < K_; ++k)
      means_[i * K_ + k] = (t * means_[i * K_ + k] + preds[r * K_ + k]) / (t + 1.0);
    ++counts_[i];
  }
}

void PredictionBuffer::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  io::write_f64(dir / "buffer_means.f64", means_);
  std::vector<std::int64_t> c(counts_.begin(), counts_.end());
  c.push_back(static_cast<std::int64_t>(K_));  // trailing record: class count
  io::write_i64(dir / "buffer_counts.i64", c);
}

PredictionBuffer PredictionBuffer::load(const std::filesystem::path& dir) {
  PredictionBuffer buf;
  buf.means_ = io::read_f64(dir / "buffer_means.f64");
  auto c = io::read_i64(dir / "buffer_counts.i64");
  if (c.empty()) throw std::runtime_error("PredictionBuffer::load: empty counts file");
  buf.K_ = static_cast<std::size_t>(c.back());
  c.pop_back();
  buf.counts_.assign(c.begin(), c.end());
  if (buf.means_.size() != buf.counts_.size() * buf.K_)
    throw std::runtime_error("PredictionBuffer::load: means/counts size mismatch");
  return buf;
}

double consistency_loss(const std::vector<double>& current_preds,
                        const PredictionBuffer& buffer,
                        const std::vector<std::size_t>& example_ids, std::size_t epoch,
                        std::vector<double>* grad_out) {
  const std::size_t K = buffer.classes();
  const std::size_t batch = example_ids.size();
  if (current_preds.size() != batch * K)
    throw ShapeError("consistency_loss: prediction block size mismatch");
  if (grad_out) grad_out->assign(batch * K, 0.0);
  if (epoch == 0) return 0.0;
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    std::size_t i = example_ids[r];
    if (buffer.count(i) == 0) continue;
    const double* m = buffer.mean(i);
    for (std::size_t k = 0; k < K; ++k) {
      double diff = current_preds[r * K + k] - m[k];
      loss += diff * diff;
      if (grad_out) (*grad_out)[r * K + k] = 2.0 * diff / static_cast<double>(batch);
    }
  }
  return loss / static_cast<double>(batch);
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  if (s == "cyclic") return ScheduleKind::cyclic;
  if (s == "piecewise") return ScheduleKind::piecewise;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::cyclic: return "cyclic";
    case ScheduleKind::piecewise: return "piecewise";
  }
  return "?";
}

double cr_weight(const ScheduleSpec& spec, double t) {
  const double T = static_cast<double>(spec.total_epochs);
  if (t < 0 || t > T) throw std::out_of_range("cr_weight: epoch outside [0, T]");
  const double frac = t / T;
  switch (spec.kind) {
    case ScheduleKind::linear:
      return frac * spec.lambda_max;
    case ScheduleKind::cosine:
      return std::cos((1.0 - frac) * M_PI / 2.0) * spec.lambda_max;
    case ScheduleKind::cyclic:
      return std::sqrt(std::max(0.0, 1.0 - (1.0 - frac) * (1.0 - frac))) * spec.lambda_max;
    case ScheduleKind::piecewise:
      if (t == 0.0) return 0.0;
      if (frac <= 1.0 / 3.0) return 0.0;
      if (frac <= 2.0 / 3.0) return spec.lambda_max / 2.0;
      return spec.lambda_max;
  }
  return 0.0;
}

}  // namespace sokd
