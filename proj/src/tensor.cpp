#include "sokd/tensor.hpp"

#include <cmath>

namespace sokd {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), values_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_product(shape_))
    throw ShapeError("Tensor: values length does not match shape product");
}

Tensor Tensor::vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

void Tensor::check_finite(const std::string& context) const {
  for (double v : values_)
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + context);
}

Parameter::Parameter(std::string name_, Tensor value)
    : name(std::move(name_)),
      tensor(std::move(value)),
      gradient(tensor.shape()),
      momentum_state(tensor.shape()) {}

void Parameter::zero_grad() {
  std::fill(gradient.values().begin(), gradient.values().end(), 0.0);
}

void OptimizerConfig::validate() const {
  if (!(learning_rate0 > 0)) throw std::invalid_argument("learning_rate0 must be positive");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must be in [0,1)");
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be nonnegative");
  if (!(decay_factor > 0) || decay_factor > 1)
    throw std::invalid_argument("decay_factor must be in (0,1]");
  for (std::size_t i = 1; i < decay_milestones.size(); ++i)
    if (decay_milestones[i] <= decay_milestones[i - 1])
      throw std::invalid_argument("decay_milestones must be strictly increasing");
}

double lr_at(std::size_t epoch, const OptimizerConfig& cfg) {
  double lr = cfg.learning_rate0;
  for (std::size_t m : cfg.decay_milestones)
    if (m <= epoch) lr *= cfg.decay_factor;
  return lr;
}

void sgd_step(std::vector<Parameter>& params, double lr, const OptimizerConfig& cfg) {
  for (Parameter& p : params) {
    if (!p.gradient.same_shape(p.tensor))
      throw ShapeError("sgd_step: missing or misshapen gradient for parameter " + p.name);
    auto& v = p.tensor.values();
    auto& g = p.gradient.values();
    auto& m = p.momentum_state.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      m[i] = cfg.momentum * m[i] + g[i] + cfg.weight_decay * v[i];
      v[i] -= lr * m[i];
    }
    p.tensor.check_finite("sgd_step(" + p.name + ")");
  }
}

}  // namespace sokd
