#include "sokd/netlib.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sokd/io.hpp"
#include "sokd/rng.hpp"

namespace sokd {

using json = nlohmann::json;

namespace {

Tensor glorot_uniform(std::size_t in, std::size_t out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w = Tensor::matrix(in, out);
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

void push_dense(std::vector<Parameter>& params, const std::string& name, std::size_t in,
                std::size_t out, Rng& rng) {
  params.emplace_back(name + ".weight", glorot_uniform(in, out, rng));
  params.emplace_back(name + ".bias", Tensor({out}));
}

// layer sizes of the trainable stack for each kind
std::vector<std::size_t> stack_sizes(const Network& net) {
  std::vector<std::size_t> sizes;
  if (net.kind == NetKind::generic_mlp) {
    sizes.push_back(net.dims.M * net.dims.b);
    for (std::size_t h : net.dims.hidden) sizes.push_back(h);
    sizes.push_back(net.dims.K);
  } else {
    sizes.push_back(net.dims.b);
    for (std::size_t h : net.dims.hidden) sizes.push_back(h);
    sizes.push_back(net.dims.d);
    sizes.push_back(net.dims.K);
  }
  return sizes;
}

}  // namespace

Parameter& Network::param(const std::string& name) {
  for (Parameter& p : params)
    if (p.name == name) return p;
  throw std::runtime_error("no parameter named " + name);
}

const Parameter& Network::param(const std::string& name) const {
  return const_cast<Network*>(this)->param(name);
}

void Network::zero_grads() {
  for (Parameter& p : params) p.zero_grad();
}

Network make_mlp(NetworkDims dims, std::uint64_t seed) {
  Network net;
  net.kind = NetKind::generic_mlp;
  net.head = Head::standard_softmax;
  net.dims = std::move(dims);
  Rng rng(substream_seed(seed, "init"));
  std::vector<std::size_t> sizes = stack_sizes(net);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    push_dense(net.params, "layer" + std::to_string(i), sizes[i], sizes[i + 1], rng);
  return net;
}

Network make_patchwise(NetworkDims dims, std::uint64_t seed) {
  Network net;
  net.kind = NetKind::patchwise;
  net.head = Head::modified_softmax;
  net.dims = std::move(dims);
  Rng rng(substream_seed(seed, "init"));
  // extractor b -> hidden... -> d
  std::vector<std::size_t> sizes;
  sizes.push_back(net.dims.b);
  for (std::size_t h : net.dims.hidden) sizes.push_back(h);
  sizes.push_back(net.dims.d);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    push_dense(net.params, "layer" + std::to_string(i), sizes[i], sizes[i + 1], rng);
  push_dense(net.params, "head", net.dims.d, net.dims.K, rng);
  return net;
}

std::vector<double> modified_softmax(const Tensor& logits) {
  logits.check_finite("modified_softmax");
  const std::size_t M = logits.rows();
  const std::size_t K = logits.cols();
  // log out_k = (1/M) sum_m h_{m,k} - (1/M) sum_m LSE(h_m)
  double lse_sum = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    double mx = logits.at(m, 0);
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, logits.at(m, k));
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(logits.at(m, k) - mx);
    lse_sum += mx + std::log(s);
  }
  const double inv_m = 1.0 / static_cast<double>(M);
  std::vector<double> out(K);
  for (std::size_t k = 0; k < K; ++k) {
    double mean_k = 0.0;
    for (std::size_t m = 0; m < M; ++m) mean_k += logits.at(m, k);
    out[k] = std::exp(inv_m * (mean_k - lse_sum));
  }
  return out;
}

namespace {

// dense stack application to a row-major (n x in) buffer, in place sizes
std::vector<double> apply_stack(const Network& net, const std::string& prefix,
                                std::size_t first_layer, std::size_t n_layers,
                                std::vector<double> x, std::size_t n_rows, bool relu_last) {
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Parameter& W = net.param(prefix + std::to_string(first_layer + l) + ".weight");
    const Parameter& B = net.param(prefix + std::to_string(first_layer + l) + ".bias");
    std::size_t in = W.tensor.rows(), out = W.tensor.cols();
    std::vector<double> y(n_rows * out, 0.0);
    for (std::size_t r = 0; r < n_rows; ++r) {
      for (std::size_t i = 0; i < in; ++i) {
        double xv = x[r * in + i];
        if (xv == 0.0) continue;
        const double* wrow = W.tensor.values().data() + i * out;
        double* yrow = y.data() + r * out;
        for (std::size_t j = 0; j < out; ++j) yrow[j] += xv * wrow[j];
      }
      for (std::size_t j = 0; j < out; ++j) y[r * out + j] += B.tensor[j];
    }
    bool apply_relu = (l + 1 < n_layers) || relu_last;
    if (apply_relu)
      for (double& v : y) v = v > 0 ? v : 0.0;
    x = std::move(y);
  }
  return x;
}

std::vector<double> softmax_vec(const std::vector<double>& h) {
  double mx = *std::max_element(h.begin(), h.end());
  std::vector<double> p(h.size());
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    p[i] = std::exp(h[i] - mx);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

std::vector<double> predict(const Network& net, const std::vector<double>& x,
                            std::vector<double>* head_logits) {
  const auto& d = net.dims;
  if (x.size() != d.M * d.b) throw ShapeError("predict: input length != M*b");
  if (net.kind == NetKind::generic_mlp) {
    std::size_t n_layers = d.hidden.size() + 1;
    std::vector<double> logits = apply_stack(net, "layer", 0, n_layers, x, 1, false);
    if (head_logits) *head_logits = logits;
    return softmax_vec(logits);
  }
  // patchwise: shared extractor per patch, then head, then modified softmax
  std::size_t n_layers = d.hidden.size() + 1;
  std::vector<double> feats = apply_stack(net, "layer", 0, n_layers, x, d.M, true);
  const Parameter& W = net.param("head.weight");
  const Parameter& B = net.param("head.bias");
  Tensor logits = Tensor::matrix(d.M, d.K);
  for (std::size_t m = 0; m < d.M; ++m)
    for (std::size_t i = 0; i < d.d; ++i) {
      double f = feats[m * d.d + i];
      if (f == 0.0) continue;
      for (std::size_t k = 0; k < d.K; ++k) logits.at(m, k) += f * W.tensor.at(i, k);
    }
  for (std::size_t m = 0; m < d.M; ++m)
    for (std::size_t k = 0; k < d.K; ++k) logits.at(m, k) += B.tensor[k];
  if (head_logits) {
    head_logits->assign(d.K, 0.0);
    for (std::size_t k = 0; k < d.K; ++k) {
      for (std::size_t m = 0; m < d.M; ++m) (*head_logits)[k] += logits.at(m, k);
      (*head_logits)[k] /= static_cast<double>(d.M);
    }
  }
  return modified_softmax(logits);
}

std::vector<double> predict_renormalized(const Network& net, const std::vector<double>& x) {
  std::vector<double> p = predict(net, x);
  double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= s;
  return p;
}

double lipschitz_bound(const Tensor& W) {
  W.check_finite("lipschitz_bound");
  double best = 0.0;
  for (std::size_t j = 0; j < W.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < W.rows(); ++i) s += std::fabs(W.at(i, j));
    best = std::max(best, s);
  }
  return best;
}

namespace {

// Stored weights are (in x out); the component operator is the transpose,
// so its induced 1-norm is the max absolute row sum of the stored matrix.
double stored_operator_norm(const Tensor& W, std::size_t* argmax_row = nullptr) {
  double best = -1.0;
  std::size_t best_row = 0;
  for (std::size_t i = 0; i < W.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < W.cols(); ++j) s += std::fabs(W.at(i, j));
    if (s > best) {  // strict: ties keep the lowest index
      best = s;
      best_row = i;
    }
  }
  if (argmax_row) *argmax_row = best_row;
  return best;
}

}  // namespace

LipschitzReport lipschitz_report(const Network& net) {
  LipschitzReport rep;
  for (const Parameter& p : net.params) {
    if (p.name.size() < 7 || p.name.substr(p.name.size() - 7) != ".weight") continue;
    double bound = stored_operator_norm(p.tensor);
    rep.per_component.emplace_back(p.name, bound);
    rep.total += bound;
  }
  return rep;
}

double lipschitz_penalty_accumulate(Network& net, double weight) {
  double total = 0.0;
  for (Parameter& p : net.params) {
    if (p.name.size() < 7 || p.name.substr(p.name.size() - 7) != ".weight") continue;
    std::size_t row = 0;
    total += stored_operator_norm(p.tensor, &row);
    if (weight != 0.0) {
      for (std::size_t j = 0; j < p.tensor.cols(); ++j) {
        double v = p.tensor.at(row, j);
        double sg = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
        p.gradient.at(row, j) += weight * sg;
      }
    }
  }
  return total;
}

Tape::Id forward_logits_mlp(Tape& tape, Network& net, Tape::Id X) {
  std::size_t n_layers = net.dims.hidden.size() + 1;
  Tape::Id h = X;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Tape::Id w = tape.param(net.param("layer" + std::to_string(l) + ".weight"));
    Tape::Id b = tape.param(net.param("layer" + std::to_string(l) + ".bias"));
    h = tape.add(tape.matmul(h, w), b);
    if (l + 1 < n_layers) h = tape.relu(h);
  }
  return h;
}

Tape::Id forward_patch_logits(Tape& tape, Network& net, Tape::Id Xp) {
  std::size_t n_layers = net.dims.hidden.size() + 1;
  Tape::Id h = Xp;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Tape::Id w = tape.param(net.param("layer" + std::to_string(l) + ".weight"));
    Tape::Id b = tape.param(net.param("layer" + std::to_string(l) + ".bias"));
    h = tape.add(tape.matmul(h, w), b);
    h = tape.relu(h);  // extractor ends in ReLU; head follows
  }
  Tape::Id w = tape.param(net.param("head.weight"));
  Tape::Id b = tape.param(net.param("head.bias"));
  return tape.add(tape.matmul(h, w), b);
}

void save_network(const Network& net, const CheckpointMeta& meta,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["schema_version"] = 1;
  manifest["kind"] = net.kind == NetKind::generic_mlp ? "generic-mlp" : "patchwise";
  manifest["head"] =
      net.head == Head::standard_softmax ? "standard-softmax" : "modified-softmax";
  manifest["dims"] = {{"M", net.dims.M},  {"b", net.dims.b}, {"hidden", net.dims.hidden},
                      {"d", net.dims.d},  {"K", net.dims.K}};
  manifest["epoch"] = meta.epoch;
  manifest["seed"] = meta.seed;
  manifest["config_hash"] = meta.config_hash;
  json params = json::array();
  for (const Parameter& p : net.params)
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  manifest["parameters"] = params;
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  for (const Parameter& p : net.params)
    io::write_f64(dir / (p.name + ".f64"), p.tensor.values());
}

Network load_network(const std::filesystem::path& dir, CheckpointMeta* meta) {
  json manifest = json::parse(io::read_text(dir / "manifest.json"));
  Network net;
  net.kind = manifest.at("kind").get<std::string>() == "patchwise" ? NetKind::patchwise
                                                                   : NetKind::generic_mlp;
  net.head = manifest.at("head").get<std::string>() == "modified-softmax"
                 ? Head::modified_softmax
                 : Head::standard_softmax;
  const json& jd = manifest.at("dims");
  net.dims.M = jd.at("M").get<std::size_t>();
  net.dims.b = jd.at("b").get<std::size_t>();
  net.dims.hidden = jd.at("hidden").get<std::vector<std::size_t>>();
  net.dims.d = jd.at("d").get<std::size_t>();
  net.dims.K = jd.at("K").get<std::size_t>();
  for (const auto& jp : manifest.at("parameters")) {
    std::string name = jp.at("name").get<std::string>();
    auto shape = jp.at("shape").get<std::vector<std::size_t>>();
    auto values = io::read_f64(dir / (name + ".f64"));
    net.params.emplace_back(name, Tensor(shape, std::move(values)));
  }
  if (meta) {
    meta->epoch = manifest.at("epoch").get<std::size_t>();
    meta->seed = manifest.at("seed").get<std::uint64_t>();
    meta->config_hash = manifest.at("config_hash").get<std::string>();
  }
  return net;
}

}  // namespace sokd
