#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sokd {

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of 64-bit reals. Rank 0 (scalar), 1 or 2 in practice.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : (shape_.empty() ? 1 : shape_[0]); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  // Throws NumericError if any entry is NaN or Inf.
  void check_finite(const std::string& context) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

// Named trainable tensor with momentum state for SGD.
struct Parameter {
  std::string name;
  Tensor tensor;
  Tensor gradient;        // same shape, zeroed between steps
  Tensor momentum_state;  // same shape, initialised to zero

  Parameter() = default;
  Parameter(std::string name, Tensor value);

  void zero_grad();
};

struct OptimizerConfig {
  double learning_rate0 = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::vector<std::size_t> decay_milestones;
  double decay_factor = 0.1;

  void validate() const;
};

// learning_rate0 * decay_factor^(#milestones <= epoch)
double lr_at(std::size_t epoch, const OptimizerConfig& cfg);

// Classic SGD with momentum; weight decay folded into the gradient (L2 form).
// momentum_state <- momentum*momentum_state + grad + weight_decay*value
// value <- value - lr*momentum_state
void sgd_step(std::vector<Parameter>& params, double lr, const OptimizerConfig& cfg);

}  // namespace sokd
