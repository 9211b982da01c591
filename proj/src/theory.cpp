#include "sokd/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sokd/evalcal.hpp"
#include "sokd/tape.hpp"

namespace sokd {

using json = nlohmann::json;

FeatureStats compute_feature_stats(const MixedFeatureDataset& data) {
  if (!data.has_vocabulary)
    throw std::runtime_error("compute_feature_stats: ground-truth feature names absent");
  const std::size_t Z = data.vocabulary.size();
  const std::size_t K = data.K;
  FeatureStats stats;
  stats.occurrence_counts.assign(Z, 0);
  stats.label_means.assign(Z, std::vector<double>(K, 0.0));
  stats.mean_true_dist.assign(Z, std::vector<double>(K, 0.0));
  stats.vocab_dist.resize(Z);
  for (std::size_t z = 0; z < Z; ++z)
    stats.vocab_dist[z] = data.vocabulary.features[z].label_distribution;

  std::vector<std::size_t> present;
  for (const auto& ex : data.examples) {
    present = ex.feature_names;
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    for (std::size_t z : present) {
      ++stats.occurrence_counts[z];
      stats.label_means[z][ex.label] += 1.0;
      if (!ex.true_distribution.empty())
        for (std::size_t k = 0; k < K; ++k)
          stats.mean_true_dist[z][k] += ex.true_distribution[k];
    }
  }
  for (std::size_t z = 0; z < Z; ++z) {
    if (stats.occurrence_counts[z] == 0) continue;
    double inv = 1.0 / static_cast<double>(stats.occurrence_counts[z]);
    for (std::size_t k = 0; k < K; ++k) {
      stats.label_means[z][k] *= inv;
      stats.mean_true_dist[z][k] *= inv;
    }
  }
  return stats;
}

FeatureMinimizer feature_minimizer(const MixedFeatureDataset& data) {
  if (!data.has_vocabulary)
    throw std::runtime_error("feature_minimizer: ground-truth feature names absent");
  const std::size_t Z = data.vocabulary.size();
  const std::size_t K = data.K;
  std::vector<std::vector<double>> counts(Z, std::vector<double>(K, 0.0));
  std::vector<double> totals(Z, 0.0);
  for (const auto& ex : data.examples)
    for (std::size_t z : ex.feature_names) {  // occurrence-weighted
      counts[z][ex.label] += 1.0;
      totals[z] += 1.0;
    }
  FeatureMinimizer out;
  out.p_z.resize(Z);
  for (std::size_t z = 0; z < Z; ++z) {
    if (totals[z] == 0.0) continue;  // undefined minimizer, excluded
    out.p_z[z].resize(K);
    for (std::size_t k = 0; k < K; ++k) out.p_z[z][k] = counts[z][k] / totals[z];
  }
  // attained regrouped risk: -(1/(N*M)) sum_z sum_k counts[z][k] * log p_z[k]
  const double nm = static_cast<double>(data.size() * data.M);
  double risk = 0.0;
  for (std::size_t z = 0; z < Z; ++z)
    for (std::size_t k = 0; k < K; ++k)
      if (!out.p_z[z].empty() && counts[z][k] > 0)
        risk -= counts[z][k] * std::log(out.p_z[z][k]);
  out.attained_risk = risk / nm;
  return out;
}

Lemma1Result verify_lemma1(const MixedFeatureDataset& data, std::size_t steps, double lr,
                           std::size_t feature_dim, std::uint64_t seed) {
  if (!data.has_vocabulary)
    throw std::runtime_error("verify_lemma1: synthetic ground truth required");
  const std::size_t Z = data.vocabulary.size();
  const std::size_t K = data.K;
  const std::size_t N = data.size();
  const std::size_t M = data.M;
  const std::size_t d = feature_dim;

  Rng rng(substream_seed(seed, "lemma1-init"));
  double limit = std::sqrt(6.0 / static_cast<double>(Z + d));
  Tensor E = Tensor::matrix(Z, d);
  for (double& v : E.values()) v = rng.uniform(-limit, limit);
  double limit2 = std::sqrt(6.0 / static_cast<double>(d + K));
  Tensor W = Tensor::matrix(d, K);
  for (double& v : W.values()) v = rng.uniform(-limit2, limit2);

  std::vector<Parameter> params;
  params.emplace_back("lookup", std::move(E));
  params.emplace_back("w_c", std::move(W));
  params.emplace_back("bias", Tensor({K}));

  // one-hot feature selection (N*M x Z) and repeated label one-hots
  Tensor select = Tensor::matrix(N * M, Z);
  Tensor onehot = Tensor::matrix(N * M, K);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t m = 0; m < M; ++m) {
      select.at(i * M + m, data.examples[i].feature_names[m]) = 1.0;
      onehot.at(i * M + m, data.examples[i].label) = 1.0;
    }

  OptimizerConfig opt;
  opt.learning_rate0 = lr;
  opt.momentum = 0.9;
  opt.weight_decay = 0.0;

  Lemma1Result result;
  double prev_loss = 1e300;
  std::size_t rising = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    Tape tape;
    Tape::Id feats = tape.matmul(tape.constant(select), tape.param(params[0]));
    Tape::Id logits =
        tape.add(tape.matmul(feats, tape.param(params[1])), tape.param(params[2]));
    Tape::Id logp = tape.log(tape.softmax(logits));
    Tape::Id picked = tape.mul(logp, tape.constant(onehot));
    Tape::Id loss = tape.scale(tape.sum(picked), -1.0 / static_cast<double>(N * M));
    for (auto& p : params) p.zero_grad();
    double loss_value = tape.backward(loss);
    sgd_step(params, lr, opt);
    if (loss_value > prev_loss + 1e-12) {
      if (++rising >= 10)
        throw std::runtime_error("verify_lemma1: diverging (loss rose 10 consecutive steps) at step " +
                                 std::to_string(step) + ", loss " + std::to_string(loss_value));
    } else {
      rising = 0;
    }
    prev_loss = loss_value;
    result.final_loss = loss_value;
    result.steps_run = step + 1;
  }

  FeatureMinimizer oracle = feature_minimizer(data);
  double max_gap = 0.0;
  for (std::size_t z = 0; z < Z; ++z) {
    if (oracle.p_z[z].empty()) continue;
    // p_trained(z) = softmax(E_z W + bias)
    std::vector<double> h(K, 0.0);
    for (std::size_t j = 0; j < feature_dim; ++j) {
      double e = params[0].tensor.at(z, j);
      for (std::size_t k = 0; k < K; ++k) h[k] += e * params[1].tensor.at(j, k);
    }
    for (std::size_t k = 0; k < K; ++k) h[k] += params[2].tensor[k];
    double mx = *std::max_element(h.begin(), h.end());
    double s = 0.0;
    for (double& v : h) {
      v = std::exp(v - mx);
      s += v;
    }
    for (std::size_t k = 0; k < K; ++k)
      max_gap = std::max(max_gap, std::fabs(h[k] / s - oracle.p_z[z][k]));
  }
  result.max_gap = max_gap;
  return result;
}

namespace {

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

Lemma2Result verify_lemma2(const FeatureVocabulary& vocab, const std::vector<std::size_t>& n_grid,
                           std::size_t M, const std::vector<std::uint64_t>& seeds) {
  Lemma2Result result;
  result.n_grid = n_grid;
  TransformSet identity = TransformSet::identity(vocab.b);
  for (std::size_t N : n_grid) {
    double acc = 0.0;
    std::size_t n_meas = 0;
    for (std::uint64_t seed : seeds) {
      auto ds = sample_dataset(vocab, N, M, identity, seed);
      FeatureStats stats = compute_feature_stats(ds);
      double err = 0.0;
      std::size_t n_feat = 0;
      for (std::size_t z = 0; z < vocab.size(); ++z) {
        if (stats.occurrence_counts[z] == 0) continue;
        double d2 = 0.0;
        for (std::size_t k = 0; k < vocab.K; ++k) {
          double diff = stats.label_means[z][k] - stats.mean_true_dist[z][k];
          d2 += diff * diff;
        }
        err += std::sqrt(d2);
        ++n_feat;
      }
      if (n_feat > 0) {
        acc += err / n_feat;
        ++n_meas;
      }
    }
    result.mean_error.push_back(acc / n_meas);
  }
  std::vector<double> xs(n_grid.begin(), n_grid.end());
  result.fitted_slope = fit_loglog_slope(xs, result.mean_error);
  return result;
}

std::vector<double> lemma3_gaps(const MixedFeatureDataset& data) {
  FeatureStats stats = compute_feature_stats(data);
  std::vector<double> gaps;
  for (std::size_t z = 0; z < data.vocabulary.size(); ++z) {
    if (stats.occurrence_counts[z] == 0) continue;
    double g = 0.0;
    for (std::size_t k = 0; k < data.K; ++k)
      g += std::fabs(stats.mean_true_dist[z][k] - stats.vocab_dist[z][k]);
    gaps.push_back(g);
  }
  return gaps;
}

Lemma3Result verify_lemma3(const std::vector<std::size_t>& z_grid, std::size_t M, std::size_t N,
                           std::size_t K, std::size_t b, double dirichlet_alpha,
                           const std::vector<std::uint64_t>& seeds, double pmi_bandwidth_scale,
                           double pmi_concentration) {
  Lemma3Result result;
  result.z_grid = z_grid;
  for (std::size_t Z : z_grid) {
    double acc = 0.0;
    for (std::uint64_t seed : seeds) {
      auto vocab =
          pmi_bandwidth_scale > 0.0
              ? make_pmi_vocabulary(Z, K, b, pmi_concentration, 0.1,
                                    pmi_bandwidth_scale / static_cast<double>(Z), seed)
              : make_random_vocabulary(Z, K, b, dirichlet_alpha, 0.1, seed);
      auto ds = sample_dataset(vocab, N, M, TransformSet::identity(b), seed + 1);
      auto gaps = lemma3_gaps(ds);
      acc += std::accumulate(gaps.begin(), gaps.end(), 0.0) / gaps.size();
    }
    result.mean_gap.push_back(acc / seeds.size());
  }
  return result;
}

BoundTerms bound_terms(const BoundInputs& in) {
  if (!(in.delta > 0 && in.delta < 1)) throw std::invalid_argument("bound_terms: delta outside (0,1)");
  BoundTerms t;
  t.sampling = std::sqrt(static_cast<double>(in.K) * in.M /
                         (static_cast<double>(in.N) * in.Z * in.delta));
  t.feature_gap = static_cast<double>(in.M) / static_cast<double>(in.Z);
  t.lipschitz = in.L_X * in.nu / std::sqrt(in.delta);
  t.transform = in.L_Gamma;
  t.total = t.sampling + t.feature_gap + t.lipschitz + t.transform;
  return t;
}

SweepParam sweep_param_from_string(const std::string& s) {
  if (s == "N" || s == "train_size") return SweepParam::train_size;
  if (s == "Z" || s == "vocab_size") return SweepParam::vocab_size;
  if (s == "transform_magnitude") return SweepParam::transform_magnitude;
  if (s == "lambda_lr") return SweepParam::lambda_lr;
  throw std::invalid_argument("unknown sweep parameter: " + s);
}

std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::train_size: return "train_size";
    case SweepParam::vocab_size: return "vocab_size";
    case SweepParam::transform_magnitude: return "transform_magnitude";
    case SweepParam::lambda_lr: return "lambda_lr";
  }
  return "?";
}

ScalingCurve theorem_sweep(const SweepConfig& cfg) {
  ScalingCurve curve;
  curve.param = to_string(cfg.param);
  curve.grid = cfg.grid;

  for (double g : cfg.grid) {
    std::size_t N = cfg.N, Z = cfg.Z;
    double magnitude = cfg.transform_magnitude;
    TeacherTrainConfig tcfg = cfg.teacher;
    switch (cfg.param) {
      case SweepParam::train_size: N = static_cast<std::size_t>(g); break;
      case SweepParam::vocab_size: Z = static_cast<std::size_t>(g); break;
      case SweepParam::transform_magnitude: magnitude = g; break;
      case SweepParam::lambda_lr: tcfg.lambda_lr = g; break;
    }

    std::vector<double> seed_errors;
    for (std::uint64_t seed : cfg.seeds) {
      auto vocab =
          cfg.pmi_bandwidth_scale > 0.0
              ? make_pmi_vocabulary(Z, cfg.K, cfg.b, cfg.pmi_concentration,
                                    cfg.representation_scale,
                                    cfg.pmi_bandwidth_scale / static_cast<double>(Z), seed)
              : make_random_vocabulary(Z, cfg.K, cfg.b, cfg.dirichlet_alpha,
                                       cfg.representation_scale, seed);
      auto transforms = make_transform_set(cfg.n_transforms, cfg.b, magnitude, seed);
      auto ds = sample_dataset(vocab, N, cfg.M, transforms, seed + 17);
      NetworkDims dims{cfg.M, cfg.b, cfg.hidden, cfg.d, cfg.K};
      Network net = make_patchwise(dims, seed + 31);
      TeacherTrainConfig run_cfg = tcfg;
      run_cfg.seed = seed;
      try {
        train_teacher(net, ds, run_cfg);
      } catch (const std::exception& e) {
        throw std::runtime_error("theorem_sweep: sub-run failed at " + curve.param + "=" +
                                 std::to_string(g) + " seed " + std::to_string(seed) + ": " +
                                 e.what());
      }
      if (cfg.param == SweepParam::lambda_lr)
        seed_errors.push_back(lipschitz_report(net).total);
      else
        seed_errors.push_back(distribution_error(net, ds, 1));
    }
    curve.per_seed_error.push_back(seed_errors);
    curve.mean_error.push_back(std::accumulate(seed_errors.begin(), seed_errors.end(), 0.0) /
                               seed_errors.size());

    BoundInputs bi;
    bi.K = cfg.K;
    bi.N = N;
    bi.M = cfg.M;
    bi.Z = Z;
    bi.delta = 0.1;
    bi.L_Gamma = magnitude;  // transform displacement drives the L_Gamma term
    curve.surrogate.push_back(bound_terms(bi).total);
  }
  return curve;
}

std::string ScalingCurve::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "param,value,seed_index,error\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t s = 0; s < per_seed_error[i].size(); ++s)
      out << param << ',' << grid[i] << ',' << s << ',' << per_seed_error[i][s] << '\n';
  return out.str();
}

std::string ScalingCurve::to_json() const {
  json j;
  j["param"] = param;
  j["grid"] = grid;
  j["mean_error"] = mean_error;
  j["surrogate"] = surrogate;
  bool positive = std::all_of(grid.begin(), grid.end(), [](double v) { return v > 0; }) &&
                  std::all_of(mean_error.begin(), mean_error.end(), [](double v) { return v > 0; });
  if (positive && grid.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double lx = std::log(grid[i]), ly = std::log(mean_error[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    double n = static_cast<double>(grid.size());
    j["fitted_slope"] = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return j.dump(2) + "\n";
}

}  // namespace sokd
