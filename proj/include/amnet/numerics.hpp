#pragma once

// Dense f64 tensors, a reverse-mode tape, and a central-difference gradient
// oracle. Every model equation is composed from the primitives in this file.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace amnet {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

/// Row-major dense tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_numel(shape_) != data_.size())
      throw DimensionError("tensor shape " + shape_str(shape_) + " does not hold " +
                           std::to_string(data_.size()) + " values");
  }

  static Tensor vector(std::vector<double> values) {
    Shape s{values.size()};
    return Tensor(std::move(s), std::move(values));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_, 0.0); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  /// Rows/cols under the convention that rank-1 tensors are row vectors.
  std::size_t rows() const { return rank() >= 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() >= 2 ? size() / shape_[0] : size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Tensor reshaped(Shape s) const { return Tensor(std::move(s), data_); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& o) {
    if (o.size() != size())
      throw DimensionError("accumulate " + shape_str(o.shape_) + " into " + shape_str(shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// A learnable tensor with its accumulated gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}
};

inline void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) {
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor::zeros_like(p->value);
    p->grad.fill(0.0);
  }
}

namespace detail {

inline void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NonFiniteError(std::string(op) + ": non-finite input");
}

inline void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// out[m×n] += a[m×k] · b[k×n]
inline void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
}

// out[m×k] += g[m×n] · b[k×n]ᵀ
inline void gemm_nt(const Tensor& g, const Tensor& b, Tensor& out) {
  const std::size_t m = g.rows(), n = g.cols(), k = b.rows();
  const double* pg = g.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double* grow = pg + i * n;
      const double* brow = pb + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      po[i * k + p] += s;
    }
}

// out[k×n] += a[m×k]ᵀ · g[m×n]
inline void gemm_tn(const Tensor& a, const Tensor& g, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
  const double* pa = a.data();
  const double* pg = g.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* grow = pg + i * n;
      double* orow = po + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tape-free forward kernels. The tape ops below reuse these, and tests use
// them directly as the plain-value path.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions of " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " do not match");
  Tensor out({a.rows(), b.cols()});
  detail::gemm_nn(a, b, out);
  return out;
}

inline Tensor tanh_elem(const Tensor& a) {
  detail::require_finite(a, "tanh_elem");
  Tensor out = a;
  for (double& v : out.values()) v = std::tanh(v);
  return out;
}

inline Tensor sigmoid_elem(const Tensor& a) {
  detail::require_finite(a, "sigmoid_elem");
  Tensor out = a;
  for (double& v : out.values()) v = detail::sigmoid(v);
  return out;
}

/// Max-subtracted softmax over all entries.
inline Tensor softmax_vec(const Tensor& e) {
  if (e.size() == 0) throw std::invalid_argument("softmax_vec: empty vector");
  detail::require_finite(e, "softmax_vec");
  const double mx = *std::max_element(e.values().begin(), e.values().end());
  Tensor out = e;
  double total = 0.0;
  for (double& v : out.values()) total += (v = std::exp(v - mx));
  for (double& v : out.values()) v /= total;
  return out;
}

// ---------------------------------------------------------------------------
// Reverse-mode tape.

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  double item() const { return value()[0]; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t) { return push(std::move(t), {}); }

  /// Leaf bound to a Param; backward() accumulates into param.grad.
  Var param(Param& p) {
    Var v = push(p.value, {});
    nodes_[v.id].param = &p;
    return v;
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = seed and propagates to every reachable node.
  /// Param leaves add their gradient into Param::grad.
  void backward(Var root, double seed = 1.0) {
    if (value(root).size() != 1) throw DimensionError("backward: root must be a scalar");
    for (auto& n : nodes_) n.grad = Tensor();
    grad_ref(root.id) = Tensor(value(root).shape(), seed);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) n.param->grad += n.grad;
    }
  }

  // --- op construction (used by the free functions below) ---

  using BackwardFn = std::function<void(Tape&, const Tensor&)>;

  Var push(Tensor value, BackwardFn bw) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(bw), nullptr});
    return Var{this, nodes_.size() - 1};
  }

  /// Gradient buffer for node id, allocated lazily with the node's shape.
  Tensor& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Param* param;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {
inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument("vars live on different tapes");
  return *a.tape;
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  Tensor out = matmul(a.value(), b.value());
  return t.push(std::move(out), [a, b](Tape& tp, const Tensor& g) {
    detail::gemm_nt(g, tp.value(b), tp.grad_ref(a.id));
    detail::gemm_tn(tp.value(a), g, tp.grad_ref(b.id));
  });
}

/// a · bᵀ
inline Var matmul_nt(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols())
    throw DimensionError("matmul_nt: inner dimensions of " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()) + "ᵀ do not match");
  Tensor out({av.rows(), bv.rows()});
  detail::gemm_nt(av, bv, out);
  return t.push(std::move(out), [a, b](Tape& tp, const Tensor& g) {
    detail::gemm_nn(g, tp.value(b), tp.grad_ref(a.id));
    detail::gemm_tn(g, tp.value(a), tp.grad_ref(b.id));
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_size(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return t.push(std::move(out), [a, b](Tape& tp, const Tensor& g) {
    tp.grad_ref(a.id) += g;
    tp.grad_ref(b.id) += g;
  });
}

/// Adds a row vector (any rank, numel == cols) to every row of a.
inline Var add_row(Var a, Var row) {
  Tape& t = detail::same_tape(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.size() != av.cols())
    throw DimensionError("add_row: row " + shape_str(rv.shape()) + " does not fit " + shape_str(av.shape()));
  Tensor out = av;
  const std::size_t n = av.cols();
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
  return t.push(std::move(out), [a, row](Tape& tp, const Tensor& g) {
    tp.grad_ref(a.id) += g;
    Tensor& gr = tp.grad_ref(row.id);
    const std::size_t cols = gr.size();
    for (std::size_t i = 0; i < g.size(); ++i) gr[i % cols] += g[i];
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_size(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.push(std::move(out), [a, b](Tape& tp, const Tensor& g) {
    tp.grad_ref(a.id) += g;
    Tensor& gb = tp.grad_ref(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_size(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.push(std::move(out), [a, b](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    Tensor& gb = tp.grad_ref(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return a.tape->push(std::move(out), [a, s](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

inline Var tanh_elem(Var a) {
  Tensor out = tanh_elem(a.value());
  const std::size_t id = a.tape->size();
  return a.tape->push(std::move(out), [a, id](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{&tp, id});
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

inline Var sigmoid_elem(Var a) {
  Tensor out = sigmoid_elem(a.value());
  const std::size_t id = a.tape->size();
  return a.tape->push(std::move(out), [a, id](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{&tp, id});
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

inline Var relu_elem(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return a.tape->push(std::move(out), [a](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

inline Var square_elem(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= v;
  return a.tape->push(std::move(out), [a](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
  });
}

/// Softmax over all entries; shape preserved.
inline Var softmax_vec(Var e) {
  Tensor out = softmax_vec(e.value());
  const std::size_t id = e.tape->size();
  return e.tape->push(std::move(out), [e, id](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{&tp, id});
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    Tensor& ge = tp.grad_ref(e.id);
    for (std::size_t i = 0; i < g.size(); ++i) ge[i] += y[i] * (g[i] - dot);
  });
}

/// Sum of all entries → 1-element tensor.
inline Var sum_all(Var a) {
  const auto& v = a.value().values();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return a.tape->push(Tensor({1}, s), [a](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_ref(a.id);
    for (double& x : ga.values()) x += g[0];
  });
}

inline Var mean_all(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

/// Per-row sums of an m×n tensor → length-m vector.
inline Var row_sum(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
  return a.tape->push(std::move(out), [a, n](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i / n];
  });
}

/// Mean over rows of an m×n tensor → 1×n row.
inline Var row_mean(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (m == 0) throw std::invalid_argument("row_mean: no rows");
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  const double inv = 1.0 / static_cast<double>(m);
  for (double& v : out.values()) v *= inv;
  return a.tape->push(std::move(out), [a, n, inv](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i % n] * inv;
  });
}

/// Concatenates row vectors into one 1×(Σn) row.
inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: nothing to join");
  Tape& t = *parts.front().tape;
  std::vector<double> vals;
  for (Var p : parts) {
    if (p.tape != &t) throw std::invalid_argument("vars live on different tapes");
    const auto& v = p.value().values();
    vals.insert(vals.end(), v.begin(), v.end());
  }
  const std::size_t n = vals.size();
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.push(Tensor({1, n}, std::move(vals)), [keep](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (Var p : keep) {
      Tensor& gp = tp.grad_ref(p.id);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      off += gp.size();
    }
  });
}

/// Same values under a new shape.
inline Var reshape(Var a, Shape s) {
  Tensor out = a.value().reshaped(std::move(s));
  return a.tape->push(std::move(out), [a](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

/// Row i of an m×n tensor as a 1×n row.
inline Var row(Var a, std::size_t i) {
  const Tensor& av = a.value();
  const std::size_t n = av.cols();
  if (i >= av.rows()) throw DimensionError("row: index out of range for " + shape_str(av.shape()));
  Tensor out({1, n}, std::vector<double>(av.values().begin() + static_cast<std::ptrdiff_t>(i * n),
                                         av.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  return a.tape->push(std::move(out), [a, i, n](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j];
  });
}

/// Inverted dropout. The keep-mask is drawn once here; disabled or rate 0
/// returns the input node unchanged.
template <class Rng>
Var dropout(Var a, double rate, bool enabled, Rng& rng) {
  if (!enabled || rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Tensor mask(a.value().shape());
  for (double& m : mask.values()) m = keep(rng) ? s : 0.0;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return a.tape->push(std::move(out), [a, mask = std::move(mask)](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Gradient oracle.

/// Central-difference estimate of d loss / d param, one coordinate at a time.
/// The loss is evaluated twice at the unperturbed point; a mismatch means the
/// function is not deterministic and the estimate would be meaningless.
inline Tensor finite_diff_grad(const std::function<double()>& loss_fn, Param& param, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  const double base1 = loss_fn();
  const double base2 = loss_fn();
  if (base1 != base2) throw OracleError("finite_diff_grad: loss function is not deterministic");
  Tensor out = Tensor::zeros_like(param.value);
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double orig = param.value[i];
    param.value[i] = orig + step;
    const double up = loss_fn();
    param.value[i] = orig - step;
    const double down = loss_fn();
    param.value[i] = orig;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

/// Largest coordinate-wise |a−n| / max(|a|, |n|, floor).
inline double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6) {
  if (analytic.size() != numeric.size())
    throw DimensionError("max_relative_error: shapes " + shape_str(analytic.shape()) + " and " +
                         shape_str(numeric.shape()) + " differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

}  // namespace amnet
