#include "sokd/trainlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sokd/io.hpp"
#include "sokd/rng.hpp"
#include "sokd/tape.hpp"

namespace sokd {

using json = nlohmann::json;

TeacherMode teacher_mode_from_string(const std::string& s) {
  if (s == "standard") return TeacherMode::standard;
  if (s == "soteacher") return TeacherMode::soteacher;
  if (s == "no-lr") return TeacherMode::no_lr;
  if (s == "no-cr") return TeacherMode::no_cr;
  throw std::invalid_argument("unknown teacher mode: " + s);
}

std::string to_string(TeacherMode m) {
  switch (m) {
    case TeacherMode::standard: return "standard";
    case TeacherMode::soteacher: return "soteacher";
    case TeacherMode::no_lr: return "no-lr";
    case TeacherMode::no_cr: return "no-cr";
  }
  return "?";
}

double TeacherTrainConfig::effective_lambda_lr() const {
  if (mode == TeacherMode::standard || mode == TeacherMode::no_lr) return 0.0;
  return lambda_lr;
}

double TeacherTrainConfig::effective_lambda_cr(double epoch) const {
  if (mode == TeacherMode::standard || mode == TeacherMode::no_cr) return 0.0;
  ScheduleSpec spec = cr_schedule;
  spec.total_epochs = epochs;
  return cr_weight(spec, epoch);
}

namespace {

// Flattened batch inputs (batch x M*b). With augment on, a fresh transform
// is drawn per patch from the dataset's transform set and applied to the
// base representation; otherwise the stored (generation-time) patches are
// used as-is.
std::vector<double> gather_inputs(const MixedFeatureDataset& data,
                                  const std::vector<std::size_t>& idx, bool augment,
                                  Rng* aug_rng) {
  const std::size_t mb = data.M * data.b;
  std::vector<double> X(idx.size() * mb);
  const bool do_aug = augment && aug_rng && !data.transforms.is_identity_only();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& ex = data.examples[idx[r]];
    if (do_aug) {
      for (std::size_t m = 0; m < data.M; ++m) {
        std::size_t t = aug_rng->uniform_index(data.transforms.transforms.size());
        data.transforms.transforms[t].apply(ex.base_patches.data() + m * data.b,
                                            X.data() + r * mb + m * data.b, data.b);
      }
    } else {
      std::copy(ex.patches.begin(), ex.patches.end(), X.begin() + r * mb);
    }
  }
  return X;
}

Tensor onehot_matrix(const MixedFeatureDataset& data, const std::vector<std::size_t>& idx,
                     std::size_t repeat) {
  Tensor t = Tensor::matrix(idx.size() * repeat, data.K);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t m = 0; m < repeat; ++m)
      t.at(r * repeat + m, data.examples[idx[r]].label) = 1.0;
  return t;
}

// (batch x batch*M) averaging matrix: row r has 1/M at columns r*M..r*M+M-1.
Tensor group_average_matrix(std::size_t batch, std::size_t M) {
  Tensor t = Tensor::matrix(batch, batch * M);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t m = 0; m < M; ++m) t.at(r, r * M + m) = 1.0 / static_cast<double>(M);
  return t;
}

struct ForwardNodes {
  Tape::Id ce;      // scalar mean cross-entropy
  Tape::Id probs;   // (batch x K) renormalized probabilities
  Tape::Id logits;  // (batch x K) head logits (patch-averaged for patchwise)
};

// Builds the mode-appropriate cross-entropy and renormalized prediction
// nodes for one batch. For the patchwise head the CE is the unnormalized
// modified-softmax risk, which regroups into the mean per-patch
// log-softmax; the renormalized prediction is the softmax of the
// patch-averaged logits.
ForwardNodes forward_batch(Tape& tape, Network& net, const MixedFeatureDataset& data,
                           const std::vector<std::size_t>& idx, const std::vector<double>& X) {
  const std::size_t batch = idx.size();
  ForwardNodes out;
  if (net.kind == NetKind::generic_mlp) {
    Tape::Id x = tape.constant(Tensor::matrix(batch, data.M * data.b, X));
    out.logits = forward_logits_mlp(tape, net, x);
    out.probs = tape.softmax(out.logits);
    Tape::Id logp = tape.log(out.probs);
    Tape::Id picked = tape.mul(logp, tape.constant(onehot_matrix(data, idx, 1)));
    out.ce = tape.scale(tape.sum(picked), -1.0 / static_cast<double>(batch));
  } else {
    Tape::Id xp = tape.constant(Tensor::matrix(batch * data.M, data.b, X));
    Tape::Id patch_logits = forward_patch_logits(tape, net, xp);
    Tape::Id logp = tape.log(tape.softmax(patch_logits));
    Tape::Id picked = tape.mul(logp, tape.constant(onehot_matrix(data, idx, data.M)));
    out.ce = tape.scale(tape.sum(picked), -1.0 / static_cast<double>(batch * data.M));
    Tape::Id avg = tape.constant(group_average_matrix(batch, data.M));
    out.logits = tape.matmul(avg, patch_logits);
    out.probs = tape.softmax(out.logits);
  }
  return out;
}

std::vector<std::size_t> train_indices(const MixedFeatureDataset& data) {
  auto idx = data.indices_of(Split::train);
  if (idx.empty()) {
    idx.resize(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }
  return idx;
}

}  // namespace

std::vector<double> batch_predict(const Network& net, const MixedFeatureDataset& data,
                                  const std::vector<std::size_t>& idx) {
  std::vector<double> out(idx.size() * data.K);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto p = predict_renormalized(net, data.examples[idx[r]].patches);
    std::copy(p.begin(), p.end(), out.begin() + r * data.K);
  }
  return out;
}

double accuracy(const Network& net, const MixedFeatureDataset& data, Split split) {
  auto idx = data.indices_of(split);
  if (idx.empty()) {
    idx.resize(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }
  std::size_t correct = 0;
  for (std::size_t i : idx) {
    auto p = predict_renormalized(net, data.examples[i].patches);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[arg]) arg = k;
    if (arg == data.examples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

RunRecord train_teacher(Network& net, const MixedFeatureDataset& data,
                        const TeacherTrainConfig& cfg,
                        const std::optional<std::filesystem::path>& out_dir) {
  cfg.optimizer.validate();
  RunRecord record;
  auto train_idx = train_indices(data);
  auto test_idx = data.indices_of(Split::test);

  PredictionBuffer buffer(data.size(), data.K);
  Rng shuffle_rng(substream_seed(cfg.seed, "shuffle"));
  Rng aug_rng(substream_seed(cfg.seed, "transforms"));
  const double lambda_lr = cfg.effective_lambda_lr();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.optimizer);
    const double lambda_cr = cfg.effective_lambda_cr(static_cast<double>(epoch));
    const bool use_cr = lambda_cr > 0.0 && epoch >= 1;

    auto order = shuffle_rng.permutation(train_idx.size());
    double ce_sum = 0, lrp_sum = 0, crp_sum = 0;
    std::size_t n_batches = 0, correct = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> idx;
      idx.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) idx.push_back(train_idx[order[i]]);
      const std::size_t batch = idx.size();

      std::vector<double> X = gather_inputs(data, idx, cfg.augment, &aug_rng);

      try {
        Tape tape;
        ForwardNodes fwd = forward_batch(tape, net, data, idx, X);
        Tape::Id loss = fwd.ce;
        double cr_value = 0.0;
        if (use_cr) {
          Tensor buffered = Tensor::matrix(batch, data.K);
          for (std::size_t r = 0; r < batch; ++r) {
            const double* m = buffer.mean(idx[r]);
            for (std::size_t k = 0; k < data.K; ++k) buffered.at(r, k) = m[k];
          }
          Tape::Id diff = tape.sub(fwd.probs, tape.constant(std::move(buffered)));
          Tape::Id cr = tape.scale(tape.sum(tape.square(diff)), 1.0 / static_cast<double>(batch));
          cr_value = tape.value(cr)[0];
          loss = tape.add(loss, tape.scale(cr, lambda_cr));
        }
        net.zero_grads();
        double ce_value = tape.value(fwd.ce)[0];
        tape.backward(loss);
        double lr_value = lipschitz_penalty_accumulate(net, lambda_lr);
        sgd_step(net.params, lr, cfg.optimizer);

        // running-mean buffer records the pre-update forward pass
        buffer.update(idx, tape.value(fwd.probs).values());

        const Tensor& probs = tape.value(fwd.probs);
        for (std::size_t r = 0; r < batch; ++r) {
          std::size_t arg = 0;
          for (std::size_t k = 1; k < data.K; ++k)
            if (probs.at(r, k) > probs.at(r, arg)) arg = k;
          if (arg == data.examples[idx[r]].label) ++correct;
        }
        ce_sum += ce_value;
        lrp_sum += lr_value;
        crp_sum += cr_value;
        ++n_batches;
      } catch (const NumericError& e) {
        throw NumericError("teacher training aborted at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(n_batches) + ": " + e.what());
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.ce = ce_sum / n_batches;
    log.lr_penalty = lrp_sum / n_batches;
    log.cr_penalty = crp_sum / n_batches;
    log.lambda_cr = lambda_cr;
    log.total = log.ce + lambda_lr * log.lr_penalty + lambda_cr * log.cr_penalty;
    log.train_acc = static_cast<double>(correct) / train_idx.size();
    log.test_acc = test_idx.empty() ? 0.0 : accuracy(net, data, Split::test);
    record.epochs.push_back(log);

    bool at_ckpt = out_dir && ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs);
    if (at_ckpt) {
      auto dir = *out_dir / ("ckpt-" + std::to_string(epoch + 1));
      CheckpointMeta meta;
      meta.epoch = epoch + 1;
      meta.seed = cfg.seed;
      meta.config_hash = to_string(cfg.mode);
      save_network(net, meta, dir);
      buffer.save(dir);
      if (record.checkpoint_paths.empty() || record.checkpoint_paths.back() != dir.string())
        record.checkpoint_paths.push_back(dir.string());
    }
  }

  record.final_train_acc = record.epochs.empty() ? 0.0 : record.epochs.back().train_acc;
  record.final_test_acc = record.epochs.empty() ? 0.0 : record.epochs.back().test_acc;
  return record;
}

double kd_loss(const std::vector<double>& student_logits, const std::vector<double>& teacher_probs,
               std::size_t label, double alpha, double tau,
               std::vector<double>* grad_logits) {
  const std::size_t K = student_logits.size();
  if (teacher_probs.size() != K) throw ShapeError("kd_loss: class count mismatch");
  if (alpha < 0 || alpha > 1) throw std::invalid_argument("kd_loss: alpha outside [0,1]");
  if (!(tau > 0)) throw std::invalid_argument("kd_loss: temperature must be positive");

  auto softmax_of = [K](const std::vector<double>& h) {
    double mx = *std::max_element(h.begin(), h.end());
    std::vector<double> p(K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = std::exp(h[k] - mx);
      s += p[k];
    }
    for (double& v : p) v /= s;
    return p;
  };

  // teacher logits from stored probabilities, zero-mean per example
  std::vector<double> tl(K);
  double mean = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    tl[k] = std::log(teacher_probs[k] + 1e-12);
    mean += tl[k];
  }
  mean /= static_cast<double>(K);
  for (double& v : tl) v = (v - mean) / tau;
  std::vector<double> t_tau = softmax_of(tl);

  std::vector<double> s = softmax_of(student_logits);
  std::vector<double> sl_tau(K);
  for (std::size_t k = 0; k < K; ++k) sl_tau[k] = student_logits[k] / tau;
  std::vector<double> s_tau = softmax_of(sl_tau);

  double ce = -std::log(s[label] + 1e-300);
  double kl = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    if (t_tau[k] > 0) kl += t_tau[k] * (std::log(t_tau[k]) - std::log(s_tau[k] + 1e-300));

  if (grad_logits) {
    grad_logits->assign(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      double g_ce = s[k] - (k == label ? 1.0 : 0.0);
      double g_kd = tau * (s_tau[k] - t_tau[k]);
      (*grad_logits)[k] = alpha * g_ce + (1.0 - alpha) * g_kd;
    }
  }
  return alpha * ce + (1.0 - alpha) * tau * tau * kl;
}

RunRecord train_student(Network& student, const Network& teacher, const MixedFeatureDataset& data,
                        const DistillConfig& cfg) {
  cfg.optimizer.validate();
  if (teacher.dims.K != student.dims.K)
    throw std::invalid_argument("train_student: class count mismatch between networks");
  RunRecord record;
  auto train_idx = train_indices(data);
  auto test_idx = data.indices_of(Split::test);
  Rng shuffle_rng(substream_seed(cfg.seed, "shuffle"));
  Rng aug_rng(substream_seed(cfg.seed, "transforms"));
  const double alpha = cfg.alpha;
  const double tau = cfg.temperature;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.optimizer);
    auto order = shuffle_rng.permutation(train_idx.size());
    double loss_sum = 0;
    std::size_t n_batches = 0, correct = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> idx;
      for (std::size_t i = start; i < end; ++i) idx.push_back(train_idx[order[i]]);
      const std::size_t batch = idx.size();
      std::vector<double> X = gather_inputs(data, idx, cfg.augment, &aug_rng);

      // fresh frozen-teacher targets on the transformed batch inputs
      Tensor t_tau = Tensor::matrix(batch, data.K);
      double tlogt_sum = 0.0;
      for (std::size_t r = 0; r < batch; ++r) {
        std::vector<double> xi(X.begin() + r * data.M * data.b,
                               X.begin() + (r + 1) * data.M * data.b);
        auto tp = predict_renormalized(teacher, xi);
        double mean = 0.0;
        std::vector<double> tl(data.K);
        for (std::size_t k = 0; k < data.K; ++k) {
          tl[k] = std::log(tp[k] + 1e-12);
          mean += tl[k];
        }
        mean /= static_cast<double>(data.K);
        double mx = -1e300;
        for (double& v : tl) {
          v = (v - mean) / tau;
          mx = std::max(mx, v);
        }
        double s = 0.0;
        for (std::size_t k = 0; k < data.K; ++k) {
          t_tau.at(r, k) = std::exp(tl[k] - mx);
          s += t_tau.at(r, k);
        }
        for (std::size_t k = 0; k < data.K; ++k) {
          t_tau.at(r, k) /= s;
          if (t_tau.at(r, k) > 0) tlogt_sum += t_tau.at(r, k) * std::log(t_tau.at(r, k));
        }
      }

      try {
        Tape tape;
        ForwardNodes fwd = forward_batch(tape, student, data, idx, X);
        // KL(t_tau || s_tau) summed over the batch, as a graph over logits
        Tape::Id slog_tau = tape.log(tape.softmax(tape.scale(fwd.logits, 1.0 / tau)));
        Tape::Id cross = tape.scale(tape.sum(tape.mul(slog_tau, tape.constant(t_tau))), -1.0);
        Tape::Id kl_sum = tape.add(cross, tape.constant(Tensor::scalar(tlogt_sum)));
        Tape::Id kl_mean = tape.scale(kl_sum, 1.0 / static_cast<double>(batch));
        Tape::Id loss =
            tape.add(tape.scale(fwd.ce, alpha), tape.scale(kl_mean, (1.0 - alpha) * tau * tau));
        student.zero_grads();
        double loss_value = tape.backward(loss);
        sgd_step(student.params, lr, cfg.optimizer);

        const Tensor& probs = tape.value(fwd.probs);
        for (std::size_t r = 0; r < batch; ++r) {
          std::size_t arg = 0;
          for (std::size_t k = 1; k < data.K; ++k)
            if (probs.at(r, k) > probs.at(r, arg)) arg = k;
          if (arg == data.examples[idx[r]].label) ++correct;
        }
        loss_sum += loss_value;
        ++n_batches;
      } catch (const NumericError& e) {
        throw NumericError("student training aborted at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(n_batches) + ": " + e.what());
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.ce = loss_sum / n_batches;  // combined KD objective
    log.total = log.ce;
    log.train_acc = static_cast<double>(correct) / train_idx.size();
    log.test_acc = test_idx.empty() ? 0.0 : accuracy(student, data, Split::test);
    record.epochs.push_back(log);
  }
  record.final_train_acc = record.epochs.empty() ? 0.0 : record.epochs.back().train_acc;
  record.final_test_acc = record.epochs.empty() ? 0.0 : record.epochs.back().test_acc;
  return record;
}

std::string RunRecord::to_json() const {
  json j;
  j["final_test_acc"] = final_test_acc;
  j["final_train_acc"] = final_train_acc;
  j["checkpoints"] = checkpoint_paths;
  json rows = json::array();
  for (const auto& e : epochs)
    rows.push_back({{"epoch", e.epoch},
                    {"lr", e.lr},
                    {"ce", e.ce},
                    {"lr_penalty", e.lr_penalty},
                    {"cr_penalty", e.cr_penalty},
                    {"lambda_cr", e.lambda_cr},
                    {"total", e.total},
                    {"train_acc", e.train_acc},
                    {"test_acc", e.test_acc}});
  j["epochs"] = rows;
  return j.dump(2) + "\n";
}

std::string RunRecord::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,lr,ce,lr_penalty,cr_penalty,lambda_cr,train_acc,test_acc\n";
  for (const auto& e : epochs)
    out << e.epoch << ',' << e.lr << ',' << e.ce << ',' << e.lr_penalty << ',' << e.cr_penalty
        << ',' << e.lambda_cr << ',' << e.train_acc << ',' << e.test_acc << '\n';
  return out.str();
}

void RunRecord::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  io::write_text(dir / "run_record.json", to_json());
  io::write_text(dir / "epochs.csv", to_csv());
}

}  // namespace sokd
