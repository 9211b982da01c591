#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sokd/datagen.hpp"
#include "sokd/netlib.hpp"

namespace sokd {

struct CalibrationBin {
  double confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct CalibrationReport {
  double ece_raw = 0.0;
  double nll_raw = 0.0;
  double fitted_temperature = 1.0;
  double ece_scaled = 0.0;
  double nll_scaled = 0.0;
  std::size_t bin_count = 15;
  std::vector<CalibrationBin> bins;

  std::string to_json() const;
  std::string bins_to_csv() const;
};

struct FidelityReport {
  double top1_agreement = 0.0;  // percent
  std::size_t n_examples = 0;
};

// Top-label ECE with equal-width confidence bins on (0,1]; empty bins
// contribute 0. probs: N x K row-major simplex rows.
double ece(const std::vector<double>& probs, const std::vector<std::size_t>& labels,
           std::size_t K, std::size_t bins, std::vector<CalibrationBin>* bin_table = nullptr);

// Mean over examples of -log(prob of true label + 1e-12).
double nll(const std::vector<double>& probs, const std::vector<std::size_t>& labels,
           std::size_t K);

// argmin_T NLL(softmax(logits / T)) by golden-section search on
// log T in [log 0.05, log 10], tolerance 1e-4; returns 1.0 when the
// objective is flat. logits: N x K row-major.
double fit_temperature(const std::vector<double>& logits, const std::vector<std::size_t>& labels,
                       std::size_t K);

std::vector<double> scale_logits_softmax(const std::vector<double>& logits, std::size_t K,
                                         double temperature);

FidelityReport fidelity(const std::vector<double>& student_probs,
                        const std::vector<double>& teacher_probs, std::size_t K);

// Empirical mean over examples of ||renormalized prediction - p*(x)||_p;
// norm_p is 1, 2 or 0 (meaning infinity).
double distribution_error(const Network& net, const MixedFeatureDataset& data, int norm_p = 1);

// Full calibration workflow: raw metrics on the evaluation logits, a
// temperature fitted on the temperature-holdout logits, scaled metrics.
CalibrationReport calibrate(const std::vector<double>& eval_logits,
                            const std::vector<std::size_t>& eval_labels,
                            const std::vector<double>& holdout_logits,
                            const std::vector<std::size_t>& holdout_labels, std::size_t K,
                            std::size_t bins = 15);

}  // namespace sokd
