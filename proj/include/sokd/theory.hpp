#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sokd/datagen.hpp"
#include "sokd/trainlab.hpp"

namespace sokd {

// Per-feature ground-truth statistics computed by brute-force scan.
struct FeatureStats {
  std::vector<std::size_t> occurrence_counts;  // N_z, example-level presence
  std::vector<std::vector<double>> label_means;       // y_bar_z (presence-weighted)
  std::vector<std::vector<double>> mean_true_dist;    // p_bar(.|z)
  std::vector<std::vector<double>> vocab_dist;        // p_Y(.|z)
};

FeatureStats compute_feature_stats(const MixedFeatureDataset& data);

// Exact closed-form minimizer of the regrouped empirical risk under an
// invariant extractor. Occurrence-weighted: a feature drawn twice in one
// input contributes twice, matching the risk the network actually
// minimizes. Features never drawn are excluded (empty vector).
struct FeatureMinimizer {
  std::vector<std::vector<double>> p_z;  // per feature; empty when N_z = 0
  double attained_risk = 0.0;            // regrouped empirical risk at the minimizer
};

FeatureMinimizer feature_minimizer(const MixedFeatureDataset& data);

// Trains the literal invariant-extractor model (per-feature lookup vector,
// shared classifier, modified-softmax head) to convergence full-batch and
// reports max_z ||p_trained(z) - p_z||_inf against the counting oracle.
struct Lemma1Result {
  double max_gap = 0.0;
  double final_loss = 0.0;
  std::size_t steps_run = 0;
};

Lemma1Result verify_lemma1(const MixedFeatureDataset& data, std::size_t steps, double lr,
                           std::size_t feature_dim = 16, std::uint64_t seed = 0);

// Mean over features of ||y_bar_z - p_bar(.|z)||_2, measured exactly per
// (N, seed); fits the log-log slope vs N.
struct Lemma2Result {
  std::vector<std::size_t> n_grid;
  std::vector<double> mean_error;  // per N, averaged over seeds
  double fitted_slope = 0.0;
};

Lemma2Result verify_lemma2(const FeatureVocabulary& vocab, const std::vector<std::size_t>& n_grid,
                           std::size_t M, const std::vector<std::uint64_t>& seeds);

// Per-feature ||p_bar(.|z) - p_Y(.|z)||_1 on one dataset.
std::vector<double> lemma3_gaps(const MixedFeatureDataset& data);

struct Lemma3Result {
  std::vector<std::size_t> z_grid;
  std::vector<double> mean_gap;  // per |Z|, averaged over seeds
};

// Sweeps |Z| at fixed M and measures the mean feature-distribution gap.
// With pmi_bandwidth_scale > 0 the vocabulary is the PMI manifold with
// co-occurrence bandwidth pmi_bandwidth_scale / |Z| (the neighbor spacing
// shrinks as the manifold is sampled more densely, which is what drives
// the M/|Z| gap decay); 0 falls back to i.i.d. heterogeneous features.
Lemma3Result verify_lemma3(const std::vector<std::size_t>& z_grid, std::size_t M, std::size_t N,
                           std::size_t K, std::size_t b, double dirichlet_alpha,
                           const std::vector<std::uint64_t>& seeds,
                           double pmi_bandwidth_scale = 0.0, double pmi_concentration = 6.0);

struct BoundInputs {
  std::size_t K = 2, N = 1000, M = 1, Z = 8;
  double delta = 0.1;
  double L_X = 0.0, L_Gamma = 0.0;
  double nu = 0.0;  // max_z nu_z
};

// Constant-free scaling surrogates for the four realistic-case error
// terms; with L_X = L_Gamma = 0 the nonzero terms are the hypothetical
// case pair.
struct BoundTerms {
  double sampling = 0.0;       // sqrt(K*M / (N*|Z|*delta))
  double feature_gap = 0.0;    // M / |Z|
  double lipschitz = 0.0;      // L_X * nu / sqrt(delta)
  double transform = 0.0;      // L_Gamma
  double total = 0.0;
};

BoundTerms bound_terms(const BoundInputs& in);

enum class SweepParam { train_size, vocab_size, transform_magnitude, lambda_lr };

SweepParam sweep_param_from_string(const std::string& s);
std::string to_string(SweepParam p);

struct SweepConfig {
  SweepParam param = SweepParam::train_size;
  std::vector<double> grid;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  // generator defaults, overridden by the swept parameter
  std::size_t N = 2000, Z = 16, M = 2, K = 3, b = 4;
  double dirichlet_alpha = 1.0;
  double representation_scale = 0.1;
  // > 0 switches the generator to the PMI manifold vocabulary with
  // bandwidth pmi_bandwidth_scale / |Z| (see verify_lemma3)
  double pmi_bandwidth_scale = 0.0;
  double pmi_concentration = 6.0;
  double transform_magnitude = 0.0;
  std::size_t n_transforms = 8;
  TeacherTrainConfig teacher;
  std::vector<std::size_t> hidden{32};
  std::size_t d = 16;
};

struct ScalingCurve {
  std::string param;
  std::vector<double> grid;
  std::vector<std::vector<double>> per_seed_error;  // [grid][seed]
  std::vector<double> mean_error;                   // per grid point
  std::vector<double> surrogate;                    // bound-term value per grid point
  // For lambda_lr sweeps: the final teacher Lipschitz penalty instead of
  // distribution error is recorded in mean_error.

  std::string to_csv() const;
  std::string to_json() const;
};

// Trains patchwise teachers across the grid and measures the mean L1
// distribution error (or the final Lipschitz penalty for lambda_lr),
// alongside the matching bound-term surrogate.
ScalingCurve theorem_sweep(const SweepConfig& cfg);

}  // namespace sokd
