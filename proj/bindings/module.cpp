#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sokd/datagen.hpp"
#include "sokd/evalcal.hpp"
#include "sokd/netlib.hpp"
#include "sokd/regularize.hpp"
#include "sokd/tensor.hpp"
#include "sokd/theory.hpp"
#include "sokd/trainlab.hpp"

namespace py = pybind11;
using namespace sokd;

namespace {

Tensor matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("empty matrix");
  std::size_t cols = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw std::invalid_argument("ragged matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor::matrix(rows.size(), cols, std::move(flat));
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return flat;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "student-oriented teacher training laboratory core";

  m.def(
      "modified_softmax",
      [](const std::vector<std::vector<double>>& logits) {
        return modified_softmax(matrix_from_rows(logits));
      },
      py::arg("logits"),
      "Geometric-mean softmax head over per-patch logit rows.");

  m.def(
      "true_label_distribution",
      [](std::size_t K, const std::vector<std::vector<double>>& dists) {
        FeatureVocabulary v;
        v.K = K;
        v.b = 1;
        for (std::size_t i = 0; i < dists.size(); ++i) {
          FeatureSpec f;
          f.name = "z" + std::to_string(i);
          f.label_distribution = dists[i];
          f.representation_mean = {0.0};
          v.features.push_back(std::move(f));
        }
        v.sampling_weights.assign(dists.size(), 1.0 / dists.size());
        std::vector<std::size_t> names(dists.size());
        for (std::size_t i = 0; i < dists.size(); ++i) names[i] = i;
        return true_label_distribution(v, names);
      },
      py::arg("num_classes"), py::arg("label_distributions"),
      "Normalized elementwise geometric mean of the given label distributions.");

  m.def(
      "ece",
      [](const std::vector<std::vector<double>>& probs, const std::vector<std::size_t>& labels,
         std::size_t bins) {
        std::size_t K = probs.empty() ? 0 : probs.front().size();
        return ece(flatten(probs), labels, K, bins);
      },
      py::arg("probs"), py::arg("labels"), py::arg("bins") = 15);

  m.def(
      "nll",
      [](const std::vector<std::vector<double>>& probs, const std::vector<std::size_t>& labels) {
        std::size_t K = probs.empty() ? 0 : probs.front().size();
        return nll(flatten(probs), labels, K);
      },
      py::arg("probs"), py::arg("labels"));

  m.def(
      "fit_temperature",
      [](const std::vector<std::vector<double>>& logits, const std::vector<std::size_t>& labels) {
        std::size_t K = logits.empty() ? 0 : logits.front().size();
        return fit_temperature(flatten(logits), labels, K);
      },
      py::arg("logits"), py::arg("labels"));

  m.def(
      "fidelity",
      [](const std::vector<std::vector<double>>& student,
         const std::vector<std::vector<double>>& teacher) {
        std::size_t K = student.empty() ? 0 : student.front().size();
        return fidelity(flatten(student), flatten(teacher), K).top1_agreement;
      },
      py::arg("student_probs"), py::arg("teacher_probs"),
      "Top-1 agreement percentage between two probability tables.");

  m.def(
      "lipschitz_bound",
      [](const std::vector<std::vector<double>>& W) {
        return lipschitz_bound(matrix_from_rows(W));
      },
      py::arg("weights"), "Max absolute column sum (exact 1-norm-induced operator norm).");

  m.def(
      "cr_weight",
      [](const std::string& kind, double lambda_max, std::size_t total_epochs, double t) {
        ScheduleSpec spec{schedule_kind_from_string(kind), lambda_max, total_epochs};
        return cr_weight(spec, t);
      },
      py::arg("kind"), py::arg("lambda_max"), py::arg("total_epochs"), py::arg("t"));

  m.def(
      "kd_loss",
      [](const std::vector<double>& student_logits, const std::vector<double>& teacher_probs,
         std::size_t label, double alpha, double tau) {
        return kd_loss(student_logits, teacher_probs, label, alpha, tau);
      },
      py::arg("student_logits"), py::arg("teacher_probs"), py::arg("label"),
      py::arg("alpha") = 0.5, py::arg("tau") = 4.0);

  m.def(
      "bound_terms",
      [](std::size_t K, std::size_t N, std::size_t M, std::size_t Z, double delta, double L_X,
         double L_Gamma, double nu) {
        BoundInputs in{K, N, M, Z, delta, L_X, L_Gamma, nu};
        BoundTerms t = bound_terms(in);
        py::dict d;
        d["sampling"] = t.sampling;
        d["feature_gap"] = t.feature_gap;
        d["lipschitz"] = t.lipschitz;
        d["transform"] = t.transform;
        d["total"] = t.total;
        return d;
      },
      py::arg("K"), py::arg("N"), py::arg("M"), py::arg("Z"), py::arg("delta") = 0.1,
      py::arg("L_X") = 0.0, py::arg("L_Gamma") = 0.0, py::arg("nu") = 0.0);

  m.def(
      "sample_dataset_summary",
      [](std::size_t num_features, std::size_t K, std::size_t b, std::size_t N, std::size_t M,
         std::uint64_t seed) {
        auto vocab = make_random_vocabulary(num_features, K, b, 1.0, 0.1, seed);
        auto ds = sample_dataset(vocab, N, M, TransformSet::identity(b), seed);
        py::dict d;
        d["N"] = ds.size();
        d["M"] = ds.M;
        d["b"] = ds.b;
        d["K"] = ds.K;
        std::vector<std::size_t> labels;
        for (const auto& ex : ds.examples) labels.push_back(ex.label);
        d["labels"] = labels;
        return d;
      },
      py::arg("num_features"), py::arg("K"), py::arg("b"), py::arg("N"), py::arg("M") = 1,
      py::arg("seed") = 0);
}
