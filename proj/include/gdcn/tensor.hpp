#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gdcn {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Dense row-major tensor of doubles with rank 0, 1 or 2.
///
/// Matrix-shaped operations view a rank-1 tensor of length n as a 1 x n row
/// and a rank-0 tensor as 1 x 1.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor(Shape{rows, cols}, fill);
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  /// Value of a single-element tensor.
  double item() const;
  bool all_finite() const noexcept;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

enum class OpKind {
  leaf,
  constant,
  matmul,
  add,
  sub,
  mul,
  add_bias,
  scale,
  shift,
  concat,
  relu,
  tanh,
  exp,
  log,
  clamp_min,
  mean,
  sum,
  sum_sq,
  row_sum,
  diag,
  cosine_sim,
  normalize_rows,
  tile_rows,
  fold_mean,
};

const char* op_name(OpKind kind) noexcept;

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run record of a computation. Nodes are appended in evaluation
/// order, so parents always precede children.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input owned by the tape.
  Var leaf(Tensor value);
  /// Differentiable input that aliases external storage (e.g. a model
  /// parameter). The referenced tensor must outlive the tape and stay unchanged.
  Var leaf_ref(const Tensor& value);
  /// Non-differentiable input; receives a zero gradient.
  Var constant(Tensor value);
  /// Non-differentiable input aliasing external storage.
  Var constant_ref(const Tensor& value);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const;
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_.at(id).parents; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

 private:
  friend class OpRecorder;
  friend class Gradients;
  friend class Backprop;

  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::size_t> parents;
    Tensor value;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    double scalar = 0.0;   // scale factor, shift amount, clamp floor
    std::size_t count = 0;  // tile / fold block count

    const Tensor& data() const { return external ? *external : value; }
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

/// Result of a backward pass: one gradient per tape node, shaped like the
/// node's value. Nodes not on any path to the root hold exact zeros.
class Gradients {
 public:
  const Tensor& operator[](Var v) const { return grads_.at(v.id()); }
  const Tensor& at(std::size_t id) const { return grads_.at(id); }

 private:
  friend class Backprop;
  std::vector<Tensor> grads_;
};

/// Reverse-mode pass from a scalar root. Throws ShapeError for a non-scalar
/// root.
Gradients backward(const Tape& tape, Var root);

// Primitive operations. Shape rules:
//   matmul(a, b)        a: n x k, b: k x m (both rank 2) -> n x m
//   add/sub/mul(a, b)   identical shapes -> same shape (mul is elementwise)
//   add_bias(x, b)      x: n x m, b: {m} or 1 x m -> n x m
//   scale(x, c)         any -> same shape, c * x
//   shift(x, c)         any -> same shape, x + c
//   concat(xs)          all rank 1 -> joined vector; all rank 2 with equal
//                       row counts -> column-wise join
//   relu/tanh/exp/log   elementwise; relu'(0) = 0
//   clamp_min(x, lo)    elementwise max(x, lo); zero gradient where clamped
//   mean/sum/sum_sq(x)  any -> rank-0 scalar
//   row_sum(x)          n x m -> n x 1
//   diag(x)             n x n -> n x 1
//   cosine_sim(a, b)    rank 1, equal lengths -> scalar cosine;
//                       a: n x h, b: k x h -> n x k matrix of row cosines
//   normalize_rows(x)   n x m -> rows scaled to unit L2 norm
//   tile_rows(x, r)     n x m -> (r n) x m, r stacked copies
//   fold_mean(x, r)     (r n) x m -> n x m, mean of the r row blocks
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
Var shift(Var x, double amount);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var relu(Var x);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var clamp_min(Var x, double floor);
Var mean(Var x);
Var sum(Var x);
Var sum_sq(Var x);
Var row_sum(Var x);
Var diag(Var x);
Var cosine_sim(Var a, Var b);
Var normalize_rows(Var x);
Var tile_rows(Var x, std::size_t copies);
Var fold_mean(Var x, std::size_t blocks);

/// Objective rebuilt on a fresh tape for every evaluation; receives one leaf
/// per parameter (in order) and returns a scalar.
using Objective = std::function<Var(Tape&, std::span<const Var>)>;

/// Largest |analytic - central difference| / max(1, |analytic|) over every
/// coordinate of every parameter. Parameters are perturbed in place and
/// restored before returning.
double grad_check(const Objective& objective, std::span<Tensor> params, double step);

}  // namespace gdcn
