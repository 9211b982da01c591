#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sokd/rng.hpp"

namespace sokd {

// One vocabulary feature: its label distribution, the mean of its patch
// representation and an isotropic spread bound (Var[X|z] <= scale^2).
struct FeatureSpec {
  std::string name;
  std::vector<double> label_distribution;  // length K, simplex
  std::vector<double> representation_mean; // length b
  double representation_scale = 0.0;
};

struct FeatureVocabulary {
  std::size_t K = 0;  // class count
  std::size_t b = 0;  // patch dimension
  std::vector<FeatureSpec> features;
  std::vector<double> sampling_weights;  // p_Z, sums to 1
  // When set, feature names within an example are drawn with co-occurrence
  // weight decreasing in label-distribution divergence (constructive PMI
  // mode); unset means i.i.d. draws from p_Z.
  std::optional<double> pmi_bandwidth;

  std::size_t size() const { return features.size(); }
  void validate() const;
};

// Affine patch map: v -> scale * v[perm] + shift.
struct PatchTransform {
  double scale = 1.0;
  std::vector<double> shift;              // length b
  std::vector<std::size_t> permutation;   // length b

  void apply(const double* in, double* out, std::size_t b) const;
};

struct TransformSet {
  std::vector<PatchTransform> transforms;
  double magnitude_bound = 0.0;  // max over transforms of sup||g(v) - v|| on support

  static TransformSet identity(std::size_t b);
  bool is_identity_only() const;
};

struct MixedFeatureExample {
  std::vector<double> patches;       // M x b row-major, transformed
  std::vector<double> base_patches;  // M x b row-major, pre-transform (hidden truth)
  std::vector<std::size_t> feature_names;  // length M, vocabulary indices
  std::size_t label = 0;
  std::vector<double> true_distribution;   // length K; empty when unavailable
};

enum class Split : std::uint8_t { train = 0, holdout = 1, temp_holdout = 2, test = 3 };

struct MixedFeatureDataset {
  std::size_t M = 1, b = 0, K = 0;
  std::vector<MixedFeatureExample> examples;
  std::vector<Split> split_tags;  // parallel to examples
  FeatureVocabulary vocabulary;
  bool has_vocabulary = false;
  TransformSet transforms;
  std::uint64_t seed = 0;

  std::size_t size() const { return examples.size(); }
  bool has_truth() const {
    return !examples.empty() && !examples.front().true_distribution.empty();
  }
  std::vector<std::size_t> indices_of(Split s) const;
  // Deterministic modular assignment: index mod 10 -> 8 train / 1 holdout /
  // 1 temperature-holdout, or an explicit fraction split including a test tail.
  void assign_splits_modular();
  void assign_splits_fractions(double train, double holdout, double temp_holdout);
};

// Normalized elementwise geometric mean of the listed features' label
// distributions; the exact oracle p*(x).
std::vector<double> true_label_distribution(const FeatureVocabulary& vocab,
                                            const std::vector<std::size_t>& feature_names);

MixedFeatureDataset sample_dataset(const FeatureVocabulary& vocab, std::size_t N, std::size_t M,
                                   const TransformSet& transforms, std::uint64_t seed);

struct CooccurrenceStats {
  std::vector<std::size_t> feature_counts;               // N_z per feature
  std::vector<std::vector<std::size_t>> pair_counts;     // |Z| x |Z|, symmetric
};

CooccurrenceStats feature_cooccurrence_stats(const MixedFeatureDataset& dataset);

// External ingestion: IDX image+label file pair, or CSV (label first).
MixedFeatureDataset load_idx(const std::filesystem::path& images,
                             const std::filesystem::path& labels);
MixedFeatureDataset load_csv(const std::filesystem::path& path);

void save_dataset(const MixedFeatureDataset& ds, const std::filesystem::path& dir);
MixedFeatureDataset load_dataset(const std::filesystem::path& dir);

// Vocabulary builders.
// Random heterogeneous vocabulary: label distributions ~ Dirichlet(alpha),
// representation means uniform in [-1,1]^b, uniform sampling weights.
FeatureVocabulary make_random_vocabulary(std::size_t num_features, std::size_t K, std::size_t b,
                                         double dirichlet_alpha, double representation_scale,
                                         std::uint64_t seed);
// Features placed along a smooth label-distribution curve with co-occurrence
// weight decreasing in label-distribution divergence.
FeatureVocabulary make_pmi_vocabulary(std::size_t num_features, std::size_t K, std::size_t b,
                                      double concentration, double representation_scale,
                                      double bandwidth, std::uint64_t seed);

// Random affine transform set with the given displacement magnitude; zero
// magnitude yields the identity-only set.
TransformSet make_transform_set(std::size_t count, std::size_t b, double magnitude,
                                std::uint64_t seed);

}  // namespace sokd
