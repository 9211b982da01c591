#include "sokd/evalcal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sokd {

using json = nlohmann::json;

namespace {

std::size_t argmax_row(const double* row, std::size_t K) {
  std::size_t arg = 0;
  for (std::size_t k = 1; k < K; ++k)
    if (row[k] > row[arg]) arg = k;  // ties keep the lowest index
  return arg;
}

}  // namespace

double ece(const std::vector<double>& probs, const std::vector<std::size_t>& labels,
           std::size_t K, std::size_t bins, std::vector<CalibrationBin>* bin_table) {
  if (bins < 1) throw std::invalid_argument("ece: bins must be >= 1");
  const std::size_t N = labels.size();
  std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
  std::vector<std::size_t> counts(bins, 0);
  for (std::size_t i = 0; i < N; ++i) {
    const double* row = probs.data() + i * K;
    std::size_t arg = argmax_row(row, K);
    double conf = row[arg];
    // equal-width bins on (0,1]: bin j covers (j/bins, (j+1)/bins]
    std::size_t bin = conf <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(conf * bins)) - 1;
    if (bin >= bins) bin = bins - 1;
    conf_sum[bin] += conf;
    acc_sum[bin] += (arg == labels[i]) ? 1.0 : 0.0;
    ++counts[bin];
  }
  double e = 0.0;
  if (bin_table) bin_table->clear();
  for (std::size_t b = 0; b < bins; ++b) {
    CalibrationBin cb;
    cb.count = counts[b];
    if (counts[b] > 0) {
      cb.confidence = conf_sum[b] / counts[b];
      cb.accuracy = acc_sum[b] / counts[b];
      e += (static_cast<double>(counts[b]) / N) * std::fabs(cb.accuracy - cb.confidence);
    }
    if (bin_table) bin_table->push_back(cb);
  }
  return e;
}

double nll(const std::vector<double>& probs, const std::vector<std::size_t>& labels,
           std::size_t K) {
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    s += -std::log(probs[i * K + labels[i]] + 1e-12);
  return s / static_cast<double>(labels.size());
}

std::vector<double> scale_logits_softmax(const std::vector<double>& logits, std::size_t K,
                                         double temperature) {
  const std::size_t N = logits.size() / K;
  std::vector<double> probs(logits.size());
  for (std::size_t i = 0; i < N; ++i) {
    const double* row = logits.data() + i * K;
    double mx = row[0] / temperature;
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k] / temperature);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      probs[i * K + k] = std::exp(row[k] / temperature - mx);
      s += probs[i * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) probs[i * K + k] /= s;
  }
  return probs;
}

double fit_temperature(const std::vector<double>& logits, const std::vector<std::size_t>& labels,
                       std::size_t K) {
  if (labels.empty()) throw std::invalid_argument("fit_temperature: empty holdout");
  auto objective = [&](double log_t) {
    return nll(scale_logits_softmax(logits, K, std::exp(log_t)), labels, K);
  };
  double lo = std::log(0.05), hi = std::log(10.0);
  // flat objective (all logits identical per example): return 1.0 by convention
  if (std::fabs(objective(lo) - objective(hi)) < 1e-12 &&
      std::fabs(objective(0.0) - objective(lo)) < 1e-12)
    return 1.0;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = objective(c), fd = objective(d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = objective(d);
    }
  }
  return std::exp(0.5 * (a + b));
}

FidelityReport fidelity(const std::vector<double>& student_probs,
                        const std::vector<double>& teacher_probs, std::size_t K) {
  if (student_probs.size() != teacher_probs.size())
    throw std::invalid_argument("fidelity: example count mismatch");
  const std::size_t N = student_probs.size() / K;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < N; ++i)
    if (argmax_row(student_probs.data() + i * K, K) ==
        argmax_row(teacher_probs.data() + i * K, K))
      ++agree;
  FidelityReport rep;
  rep.n_examples = N;
  rep.top1_agreement = N == 0 ? 0.0 : 100.0 * static_cast<double>(agree) / N;
  return rep;
}

double distribution_error(const Network& net, const MixedFeatureDataset& data, int norm_p) {
  if (!data.has_truth())
    throw std::runtime_error("distribution_error: dataset carries no true-distribution oracle");
  double total = 0.0;
  for (const auto& ex : data.examples) {
    auto p = predict_renormalized(net, ex.patches);
    double d = 0.0;
    for (std::size_t k = 0; k < data.K; ++k) {
      double diff = std::fabs(p[k] - ex.true_distribution[k]);
      if (norm_p == 1)
        d += diff;
      else if (norm_p == 2)
        d += diff * diff;
      else
        d = std::max(d, diff);  // infinity norm
    }
    total += norm_p == 2 ? std::sqrt(d) : d;
  }
  return total / static_cast<double>(data.size());
}

CalibrationReport calibrate(const std::vector<double>& eval_logits,
                            const std::vector<std::size_t>& eval_labels,
                            const std::vector<double>& holdout_logits,
                            const std::vector<std::size_t>& holdout_labels, std::size_t K,
                            std::size_t bins) {
  CalibrationReport rep;
  rep.bin_count = bins;
  auto raw = scale_logits_softmax(eval_logits, K, 1.0);
  rep.ece_raw = ece(raw, eval_labels, K, bins, &rep.bins);
  rep.nll_raw = nll(raw, eval_labels, K);
  rep.fitted_temperature = fit_temperature(holdout_logits, holdout_labels, K);
  auto scaled = scale_logits_softmax(eval_logits, K, rep.fitted_temperature);
  rep.ece_scaled = ece(scaled, eval_labels, K, bins);
  rep.nll_scaled = nll(scaled, eval_labels, K);
  return rep;
}

std::string CalibrationReport::to_json() const {
  json j;
  j["ece_raw"] = ece_raw;
  j["nll_raw"] = nll_raw;
  j["fitted_temperature"] = fitted_temperature;
  j["ece_scaled"] = ece_scaled;
  j["nll_scaled"] = nll_scaled;
  j["bin_count"] = bin_count;
  json rows = json::array();
  for (const auto& b : bins)
    rows.push_back({{"confidence", b.confidence}, {"accuracy", b.accuracy}, {"count", b.count}});
  j["bins"] = rows;
  return j.dump(2) + "\n";
}

std::string CalibrationReport::bins_to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "confidence,accuracy,count\n";
  for (const auto& b : bins) out << b.confidence << ',' << b.accuracy << ',' << b.count << '\n';
  return out.str();
}

}  // namespace sokd
