#include "sokd/tape.hpp"

#include <algorithm>
#include <cmath>

namespace sokd {

Tape::Id Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&, Node&)> pb) {
  Node n;
  n.value = std::move(value);
  if (needs_grad) n.grad = Tensor(n.value.shape());
  n.needs_grad = needs_grad;
  n.pullback = std::move(pb);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Tape::Id Tape::constant(Tensor value) {
  value.check_finite("constant");
  return push(std::move(value), false, nullptr);
}

Tape::Id Tape::param(Parameter& p) {
  p.tensor.check_finite("param(" + p.name + ")");
  Id id = push(p.tensor, true, nullptr);
  nodes_[id].bound = &p;
  return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (A.shape().size() != 2 || B.shape().size() != 2 || A.cols() != B.rows())
    throw ShapeError("matmul: incompatible shapes");
  std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::matrix(m, n);
  const double* pa = A.values().data();
  const double* pb = B.values().data();
  double* pc = C.values().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      double av = pa[i * k + l];
      if (av == 0.0) continue;
      const double* brow = pb + l * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  C.check_finite("matmul");
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(C), ng, [a, b, m, k, n](Tape& t, Node& self) {
    const double* gc = self.grad.values().data();
    if (t.node(a).needs_grad) {
      // dA = dC * B^T
      const double* pb2 = t.node(b).value.values().data();
      double* ga = t.node(a).grad.values().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          double s = 0.0;
          const double* gcrow = gc + i * n;
          const double* brow = pb2 + l * n;
          for (std::size_t j = 0; j < n; ++j) s += gcrow[j] * brow[j];
          ga[i * k + l] += s;
        }
    }
    if (t.node(b).needs_grad) {
      // dB = A^T * dC
      const double* pa2 = t.node(a).value.values().data();
      double* gb = t.node(b).grad.values().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          double av = pa2[i * k + l];
          if (av == 0.0) continue;
          const double* gcrow = gc + i * n;
          double* gbrow = gb + l * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * gcrow[j];
        }
    }
  });
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  bool broadcast = false;
  if (!A.same_shape(B)) {
    // row broadcast: B is a vector of length cols(A)
    if (B.shape().size() == 1 && A.shape().size() == 2 && B.size() == A.cols())
      broadcast = true;
    else
      throw ShapeError("add: incompatible shapes");
  }
  Tensor C = A;
  if (broadcast) {
    for (std::size_t i = 0; i < A.rows(); ++i)
      for (std::size_t j = 0; j < A.cols(); ++j) C.at(i, j) += B[j];
  } else {
    for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  }
  C.check_finite("add");
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(C), ng, [a, b, broadcast](Tape& t, Node& self) {
    if (t.node(a).needs_grad) {
      auto& ga = t.node(a).grad.values();
      const auto& g = self.grad.values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.node(b).needs_grad) {
      auto& gb = t.node(b).grad.values();
      const Tensor& g = self.grad;
      if (broadcast) {
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g.at(i, j);
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    }
  });
}

Tape::Id Tape::relu(Id a) {
  Tensor C = nodes_[a].value;
  for (double& v : C.values()) v = v > 0 ? v : 0.0;
  return push(std::move(C), nodes_[a].needs_grad, [a](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    auto& ga = t.node(a).grad.values();
    const auto& x = t.node(a).value.values();
    const auto& g = self.grad.values();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0) ga[i] += g[i];
  });
}

Tape::Id Tape::log(Id a) {
  Tensor C = nodes_[a].value;
  for (double& v : C.values()) v = std::log(v);
  C.check_finite("log");
  return push(std::move(C), nodes_[a].needs_grad, [a](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    auto& ga = t.node(a).grad.values();
    const auto& x = t.node(a).value.values();
    const auto& g = self.grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

Tape::Id Tape::exp(Id a) {
  Tensor C = nodes_[a].value;
  for (double& v : C.values()) v = std::exp(v);
  C.check_finite("exp");
  return push(std::move(C), nodes_[a].needs_grad, [a](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    auto& ga = t.node(a).grad.values();
    const auto& y = self.value.values();
    const auto& g = self.grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Tape::Id Tape::softmax(Id a) {
  const Tensor& A = nodes_[a].value;
  std::size_t rows = A.shape().size() == 2 ? A.rows() : 1;
  std::size_t cols = A.shape().size() == 2 ? A.cols() : A.size();
  Tensor C = A;
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = C.values().data() + i * cols;
    double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) row[j] /= z;
  }
  C.check_finite("softmax");
  return push(std::move(C), nodes_[a].needs_grad, [a, rows, cols](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    auto& ga = t.node(a).grad.values();
    const auto& y = self.value.values();
    const auto& g = self.grad.values();
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        ga[i * cols + j] += y[i * cols + j] * (g[i * cols + j] - dot);
    }
  });
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!A.same_shape(B)) throw ShapeError("mul: shapes differ");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  C.check_finite("mul");
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(C), ng, [a, b](Tape& t, Node& self) {
    const auto& g = self.grad.values();
    if (t.node(a).needs_grad) {
      auto& ga = t.node(a).grad.values();
      const auto& bv = t.node(b).value.values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.node(b).needs_grad) {
      auto& gb = t.node(b).grad.values();
      const auto& av = t.node(a).value.values();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Tape::Id Tape::scale(Id a, double c) {
  Tensor C = nodes_[a].value;
  for (double& v : C.values()) v *= c;
  C.check_finite("scale");
  return push(std::move(C), nodes_[a].needs_grad, [a, c](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    auto& ga = t.node(a).grad.values();
    const auto& g = self.grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Tape::Id Tape::sum(Id a) {
  double s = 0.0;
  for (double v : nodes_[a].value.values()) s += v;
  Tensor C = Tensor::scalar(s);
  C.check_finite("sum");
  return push(std::move(C), nodes_[a].needs_grad, [a](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    double g = self.grad[0];
    for (double& v : t.node(a).grad.values()) v += g;
  });
}

Tape::Id Tape::mean(Id a) {
  std::size_t n = nodes_[a].value.size();
  double s = 0.0;
  for (double v : nodes_[a].value.values()) s += v;
  Tensor C = Tensor::scalar(s / static_cast<double>(n));
  C.check_finite("mean");
  return push(std::move(C), nodes_[a].needs_grad, [a, n](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    double g = self.grad[0] / static_cast<double>(n);
    for (double& v : t.node(a).grad.values()) v += g;
  });
}

Tape::Id Tape::square(Id a) {
  Tensor C = nodes_[a].value;
  for (double& v : C.values()) v *= v;
  C.check_finite("square");
  return push(std::move(C), nodes_[a].needs_grad, [a](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    auto& ga = t.node(a).grad.values();
    const auto& x = t.node(a).value.values();
    const auto& g = self.grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
  });
}

Tape::Id Tape::abs(Id a) {
  Tensor C = nodes_[a].value;
  for (double& v : C.values()) v = std::fabs(v);
  return push(std::move(C), nodes_[a].needs_grad, [a](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    auto& ga = t.node(a).grad.values();
    const auto& x = t.node(a).value.values();
    const auto& g = self.grad.values();
    for (std::size_t i = 0; i < g.size(); ++i)
      ga[i] += (x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0)) * g[i];
  });
}

Tape::Id Tape::max_reduce(Id a) {
  const auto& x = nodes_[a].value.values();
  std::size_t arg = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[arg]) arg = i;
  Tensor C = Tensor::scalar(x[arg]);
  return push(std::move(C), nodes_[a].needs_grad, [a, arg](Tape& t, Node& self) {
    if (!t.node(a).needs_grad) return;
    t.node(a).grad.values()[arg] += self.grad[0];
  });
}

double Tape::backward(Id loss) {
  Node& top = nodes_[loss];
  if (top.value.size() != 1) throw ShapeError("backward: loss must be scalar");
  if (!top.needs_grad) return top.value[0];
  top.grad.values()[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.pullback) n.pullback(*this, n);
    if (n.bound) {
      auto& pg = n.bound->gradient.values();
      const auto& g = n.grad.values();
      for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += g[j];
    }
  }
  return top.value[0];
}

}  // namespace sokd
