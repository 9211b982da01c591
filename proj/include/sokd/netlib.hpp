#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sokd/tape.hpp"
#include "sokd/tensor.hpp"

namespace sokd {

enum class NetKind { generic_mlp, patchwise };
enum class Head { standard_softmax, modified_softmax };

struct NetworkDims {
  std::size_t M = 1;       // patches per input
  std::size_t b = 0;       // patch dimension
  std::vector<std::size_t> hidden;
  std::size_t d = 0;       // feature dimension (patchwise extractor output)
  std::size_t K = 0;       // classes
};

// Feed-forward network with named dense components. Weights are stored
// (in x out) so a batch forward is X*W + bias; the component operator is
// the transpose.
struct Network {
  NetKind kind = NetKind::generic_mlp;
  Head head = Head::standard_softmax;
  NetworkDims dims;
  std::vector<Parameter> params;  // layer<i>.weight / layer<i>.bias, then head.weight / head.bias

  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  void zero_grads();
};

// generic-mlp: input M*b -> hidden... -> K, standard softmax head.
Network make_mlp(NetworkDims dims, std::uint64_t seed);
// patchwise: shared extractor b -> hidden... -> d applied per patch, shared
// 1x1 classifier d -> K, modified-softmax head.
Network make_patchwise(NetworkDims dims, std::uint64_t seed);

// exp((1/M) sum_m h_m) / (prod_m sum_k exp(h_{m,k}))^{1/M}, computed in
// log-space; equals the elementwise geometric mean of the per-patch
// softmax vectors. Entries are positive but need not sum to 1.
std::vector<double> modified_softmax(const Tensor& logits);

// Probabilistic prediction for one input (length M*b). For the patchwise
// kind the output is the raw modified-softmax value (may sum to < 1).
// head_logits, when given, receives the final logits (generic) or the
// patch-averaged logits (patchwise); softmax of the latter equals the
// renormalized patchwise prediction.
std::vector<double> predict(const Network& net, const std::vector<double>& x,
                            std::vector<double>* head_logits = nullptr);

// Prediction renormalized onto the simplex (identity for standard softmax).
std::vector<double> predict_renormalized(const Network& net, const std::vector<double>& x);

// Exact operator norm induced by the 1-norm: max absolute column sum.
// W is in operator orientation (out x in).
double lipschitz_bound(const Tensor& W);

struct LipschitzReport {
  std::vector<std::pair<std::string, double>> per_component;
  double total = 0.0;
};

LipschitzReport lipschitz_report(const Network& net);

// Sum of per-component bounds; adds weight * subgradient into each weight
// parameter's gradient (sign pattern on the maximizing column of the
// component operator, lowest index on ties). Returns the penalty value.
double lipschitz_penalty_accumulate(Network& net, double weight);

// Batch forward builders used by training loops.
// X: (batch x M*b) constant -> logits node (batch x K).
Tape::Id forward_logits_mlp(Tape& tape, Network& net, Tape::Id X);
// Xp: (batch*M x b) constant -> per-patch logits node (batch*M x K).
Tape::Id forward_patch_logits(Tape& tape, Network& net, Tape::Id Xp);

struct CheckpointMeta {
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

void save_network(const Network& net, const CheckpointMeta& meta,
                  const std::filesystem::path& dir);
Network load_network(const std::filesystem::path& dir, CheckpointMeta* meta = nullptr);

}  // namespace sokd
