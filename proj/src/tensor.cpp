#include "gdcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gdcn/errors.hpp"
#include "kernels.hpp"

namespace gdcn {

namespace {

constexpr double kNormFloor = 1e-12;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  shape_error(op, "shapes " + to_string(a) + " and " + to_string(b) + " do not conform");
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.size() > 2) throw ShapeError("tensor: rank " + std::to_string(shape_.size()) + " unsupported");
  values_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.size() > 2) throw ShapeError("tensor: rank " + std::to_string(shape_.size()) + " unsupported");
  if (product(shape_) != values_.size())
    throw ShapeError("tensor: shape " + to_string(shape_) + " needs " +
                     std::to_string(product(shape_)) + " values, got " +
                     std::to_string(values_.size()));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw ShapeError("tensor: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor(Shape{n, m}, std::move(values));
}

std::size_t Tensor::rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const noexcept {
  switch (shape_.size()) {
    case 0: return 1;
    case 1: return shape_[0];
    default: return shape_[1];
  }
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape_) + " is not a scalar");
  return values_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

const char* op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::add_bias: return "add_bias";
    case OpKind::scale: return "scale";
    case OpKind::shift: return "shift";
    case OpKind::concat: return "concat";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::clamp_min: return "clamp_min";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::sum_sq: return "sum_sq";
    case OpKind::row_sum: return "row_sum";
    case OpKind::diag: return "diag";
    case OpKind::cosine_sim: return "cosine_sim";
    case OpKind::normalize_rows: return "normalize_rows";
    case OpKind::tile_rows: return "tile_rows";
    case OpKind::fold_mean: return "fold_mean";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (!tape_) throw InvalidArgument("var: not bound to a tape");
  return tape_->value(id_);
}

const Tensor& Tape::value(std::size_t id) const { return nodes_.at(id).data(); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::leaf_ref(const Tensor& value) {
  Node n;
  n.kind = OpKind::leaf;
  n.external = &value;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.kind = OpKind::constant;
  n.external = &value;
  return push(std::move(n));
}

// Friend of Tape: builds op nodes.
class OpRecorder {
 public:
  static Tape& tape_of(const char* op, std::initializer_list<Var> vars) {
    Tape* tape = nullptr;
    for (const Var& v : vars) {
      if (!v.valid()) shape_error(op, "operand not bound to a tape");
      if (tape && v.tape() != tape) shape_error(op, "operands recorded on different tapes");
      tape = v.tape();
    }
    return *tape;
  }

  static Tape& tape_of(const char* op, std::span<const Var> vars) {
    if (vars.empty()) shape_error(op, "no operands");
    Tape* tape = vars.front().tape();
    for (const Var& v : vars) {
      if (!v.valid()) shape_error(op, "operand not bound to a tape");
      if (v.tape() != tape) shape_error(op, "operands recorded on different tapes");
    }
    return *tape;
  }

  static Var record(Tape& tape, OpKind kind, std::vector<std::size_t> parents, Tensor value,
                    double scalar = 0.0, std::size_t count = 0) {
    Tape::Node n;
    n.kind = kind;
    n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [&](std::size_t p) { return tape.nodes_[p].requires_grad; });
    n.parents = std::move(parents);
    n.value = std::move(value);
    n.scalar = scalar;
    n.count = count;
    return tape.push(std::move(n));
  }
};

namespace {

template <class F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

Var unary(const char* name, OpKind kind, Var x, Tensor value, double scalar = 0.0) {
  Tape& tape = OpRecorder::tape_of(name, {x});
  return OpRecorder::record(tape, kind, {x.id()}, std::move(value), scalar);
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) shape_error(op, "expected a rank-2 tensor, got " + to_string(t.shape()));
}

double row_norm(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return std::sqrt(s);
}

// Rows scaled by 1 / max(norm, floor); norms are returned unfloored.
Tensor normalized_rows(const Tensor& x, std::vector<double>* norms = nullptr) {
  Tensor out(x.shape());
  if (norms) norms->resize(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r);
    const double norm = row_norm(src);
    if (norms) (*norms)[r] = norm;
    const double inv = 1.0 / std::max(norm, kNormFloor);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] * inv;
  }
  return out;
}

// Gradient through row normalization: given d(normalized) and the forward
// quantities, accumulate d(x) into grad.
void normalize_rows_backward(const Tensor& normalized, const std::vector<double>& norms,
                             const Tensor& upstream, Tensor& grad) {
  for (std::size_t r = 0; r < normalized.rows(); ++r) {
    const auto u = normalized.row(r);
    const auto g = upstream.row(r);
    auto out = grad.row(r);
    if (norms[r] > kNormFloor) {
      double dot = 0.0;
      for (std::size_t j = 0; j < u.size(); ++j) dot += g[j] * u[j];
      const double inv = 1.0 / norms[r];
      for (std::size_t j = 0; j < u.size(); ++j) out[j] += (g[j] - dot * u[j]) * inv;
    } else {
      for (std::size_t j = 0; j < u.size(); ++j) out[j] += g[j] / kNormFloor;
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = OpRecorder::tape_of("matmul", {a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    shape_error("matmul", av.shape(), bv.shape());
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  kernels::gemm_nn(av.rows(), av.cols(), bv.cols(), av.data(), av.cols(), bv.data(), bv.cols(),
                   out.data(), out.cols());
  return OpRecorder::record(tape, OpKind::matmul, {a.id(), b.id()}, std::move(out));
}

namespace {

template <class F>
Var elementwise_binary(const char* name, OpKind kind, Var a, Var b, F f) {
  Tape& tape = OpRecorder::tape_of(name, {a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_error(name, av.shape(), bv.shape());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  return OpRecorder::record(tape, kind, {a.id(), b.id()}, std::move(out));
}

}  // namespace

Var add(Var a, Var b) {
  return elementwise_binary("add", OpKind::add, a, b, [](double x, double y) { return x + y; });
}

Var sub(Var a, Var b) {
  return elementwise_binary("sub", OpKind::sub, a, b, [](double x, double y) { return x - y; });
}

Var mul(Var a, Var b) {
  return elementwise_binary("mul", OpKind::mul, a, b, [](double x, double y) { return x * y; });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = OpRecorder::tape_of("add_bias", {x, bias});
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const bool bias_ok = (bv.rank() == 1 || (bv.rank() == 2 && bv.rows() == 1)) && bv.cols() == xv.cols();
  if (xv.rank() != 2 || !bias_ok) shape_error("add_bias", xv.shape(), bv.shape());
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t j = 0; j < xv.cols(); ++j) out(r, j) = xv(r, j) + bv[j];
  return OpRecorder::record(tape, OpKind::add_bias, {x.id(), bias.id()}, std::move(out));
}

Var scale(Var x, double factor) {
  return unary("scale", OpKind::scale, x, map_values(x.value(), [&](double v) { return factor * v; }), factor);
}

Var shift(Var x, double amount) {
  return unary("shift", OpKind::shift, x, map_values(x.value(), [&](double v) { return v + amount; }), amount);
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var concat(std::span<const Var> parts) {
  Tape& tape = OpRecorder::tape_of("concat", parts);
  const std::size_t rank = parts.front().value().rank();
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.value().rank() != rank || rank == 0) {
      shape_error("concat", parts.front().value().shape(), p.value().shape());
    }
    ids.push_back(p.id());
  }
  if (rank == 1) {
    std::vector<double> joined;
    for (const Var& p : parts) joined.insert(joined.end(), p.value().values().begin(), p.value().values().end());
    const std::size_t n = joined.size();
    return OpRecorder::record(tape, OpKind::concat, std::move(ids), Tensor(Shape{n}, std::move(joined)));
  }
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) shape_error("concat", parts.front().value().shape(), p.value().shape());
    cols += p.value().cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + offset);
    offset += v.cols();
  }
  return OpRecorder::record(tape, OpKind::concat, std::move(ids), std::move(out));
}

Var relu(Var x) {
  return unary("relu", OpKind::relu, x, map_values(x.value(), [](double v) { return v <= 0.0 ? 0.0 : v; }));
}

Var tanh(Var x) {
  return unary("tanh", OpKind::tanh, x, map_values(x.value(), [](double v) { return std::tanh(v); }));
}

Var exp(Var x) {
  return unary("exp", OpKind::exp, x, map_values(x.value(), [](double v) { return std::exp(v); }));
}

Var log(Var x) {
  return unary("log", OpKind::log, x, map_values(x.value(), [](double v) { return std::log(v); }));
}

Var clamp_min(Var x, double floor) {
  return unary("clamp_min", OpKind::clamp_min, x,
               map_values(x.value(), [&](double v) { return v < floor ? floor : v; }), floor);
}

Var sum(Var x) {
  const auto v = x.value().values();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return unary("sum", OpKind::sum, x, Tensor::scalar(s));
}

Var mean(Var x) {
  const auto v = x.value().values();
  if (v.empty()) shape_error("mean", "empty tensor");
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return unary("mean", OpKind::mean, x, Tensor::scalar(s / static_cast<double>(v.size())));
}

Var sum_sq(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v * v;
  return unary("sum_sq", OpKind::sum_sq, x, Tensor::scalar(s));
}

Var row_sum(Var x) {
  const Tensor& xv = x.value();
  require_matrix("row_sum", xv);
  Tensor out = Tensor::matrix(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v;
    out[r] = s;
  }
  return unary("row_sum", OpKind::row_sum, x, std::move(out));
}

Var diag(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.rows() != xv.cols()) shape_error("diag", "expected a square matrix, got " + to_string(xv.shape()));
  Tensor out = Tensor::matrix(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) out[r] = xv(r, r);
  return unary("diag", OpKind::diag, x, std::move(out));
}

Var cosine_sim(Var a, Var b) {
  Tape& tape = OpRecorder::tape_of("cosine_sim", {a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool vectors = av.rank() == 1 && bv.rank() == 1 && av.size() == bv.size();
  const bool matrices = av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols();
  if (!vectors && !matrices) shape_error("cosine_sim", av.shape(), bv.shape());
  const Tensor an = normalized_rows(av);
  const Tensor bn = normalized_rows(bv);
  Tensor out = Tensor::matrix(an.rows(), bn.rows());
  kernels::gemm_nt(an.rows(), bn.rows(), an.cols(), an.data(), an.cols(), bn.data(), bn.cols(),
                   out.data(), out.cols());
  if (vectors) out = Tensor::scalar(out[0]);
  return OpRecorder::record(tape, OpKind::cosine_sim, {a.id(), b.id()}, std::move(out));
}

Var normalize_rows(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) shape_error("normalize_rows", "expected rank 1 or 2, got " + to_string(xv.shape()));
  return unary("normalize_rows", OpKind::normalize_rows, x, normalized_rows(xv));
}

Var tile_rows(Var x, std::size_t copies) {
  const Tensor& xv = x.value();
  require_matrix("tile_rows", xv);
  if (copies == 0) shape_error("tile_rows", "copy count must be positive");
  Tensor out = Tensor::matrix(xv.rows() * copies, xv.cols());
  for (std::size_t c = 0; c < copies; ++c)
    std::copy(xv.values().begin(), xv.values().end(), out.values().begin() + c * xv.size());
  Tape& tape = OpRecorder::tape_of("tile_rows", {x});
  return OpRecorder::record(tape, OpKind::tile_rows, {x.id()}, std::move(out), 0.0, copies);
}

Var fold_mean(Var x, std::size_t blocks) {
  const Tensor& xv = x.value();
  require_matrix("fold_mean", xv);
  if (blocks == 0 || xv.rows() % blocks != 0)
    shape_error("fold_mean", std::to_string(xv.rows()) + " rows do not split into " + std::to_string(blocks) + " blocks");
  const std::size_t n = xv.rows() / blocks;
  const std::size_t block_size = n * xv.cols();
  Tensor out = Tensor::matrix(n, xv.cols());
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < block_size; ++i) out[i] += xv[b * block_size + i];
  const double inv = 1.0 / static_cast<double>(blocks);
  for (double& v : out.values()) v *= inv;
  Tape& tape = OpRecorder::tape_of("fold_mean", {x});
  return OpRecorder::record(tape, OpKind::fold_mean, {x.id()}, std::move(out), 0.0, blocks);
}

// ---------------------------------------------------------------------------
// Backward

class Backprop {
 public:
  Backprop(const Tape& tape, Gradients& out) : tape_(tape), grads_(out.grads_) {}

  void run(std::size_t root) {
    const auto& nodes = tape_.nodes_;
    grads_.assign(nodes.size(), Tensor());
    grads_[root] = Tensor(nodes[root].data().shape(), 1.0);
    for (std::size_t id = root + 1; id-- > 0;) {
      const auto& node = nodes[id];
      if (!node.requires_grad || grads_[id].size() == 0 || node.parents.empty()) continue;
      step(node, grads_[id]);
    }
    for (std::size_t id = 0; id < nodes.size(); ++id) {
      if (grads_[id].shape() != nodes[id].data().shape()) grads_[id] = Tensor(nodes[id].data().shape());
    }
  }

 private:
  // Zero-initialized gradient slot for parent p, or nullptr when p does not
  // need one.
  Tensor* slot(std::size_t p) {
    const auto& node = tape_.nodes_[p];
    if (!node.requires_grad) return nullptr;
    if (grads_[p].shape() != node.data().shape()) grads_[p] = Tensor(node.data().shape());
    return &grads_[p];
  }

  const Tensor& val(std::size_t p) const { return tape_.nodes_[p].data(); }

  void step(const Tape::Node& node, const Tensor& g) {
    const auto& ps = node.parents;
    switch (node.kind) {
      case OpKind::leaf:
      case OpKind::constant:
        return;
      case OpKind::matmul: {
        const Tensor& a = val(ps[0]);
        const Tensor& b = val(ps[1]);
        if (Tensor* da = slot(ps[0]))
          kernels::gemm_nt(g.rows(), a.cols(), g.cols(), g.data(), g.cols(), b.data(), b.cols(), da->data(), da->cols());
        if (Tensor* db = slot(ps[1]))
          kernels::gemm_tn(a.rows(), a.cols(), g.cols(), a.data(), a.cols(), g.data(), g.cols(), db->data(), db->cols());
        return;
      }
      case OpKind::add:
        accumulate(ps[0], g, 1.0);
        accumulate(ps[1], g, 1.0);
        return;
      case OpKind::sub:
        accumulate(ps[0], g, 1.0);
        accumulate(ps[1], g, -1.0);
        return;
      case OpKind::mul: {
        const Tensor& a = val(ps[0]);
        const Tensor& b = val(ps[1]);
        if (Tensor* da = slot(ps[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * b[i];
        if (Tensor* db = slot(ps[1]))
          for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * a[i];
        return;
      }
      case OpKind::add_bias: {
        accumulate(ps[0], g, 1.0);
        if (Tensor* db = slot(ps[1]))
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t j = 0; j < g.cols(); ++j) (*db)[j] += g(r, j);
        return;
      }
      case OpKind::scale:
        accumulate(ps[0], g, node.scalar);
        return;
      case OpKind::shift:
        accumulate(ps[0], g, 1.0);
        return;
      case OpKind::concat: {
        if (node.value.rank() == 1) {
          std::size_t offset = 0;
          for (std::size_t p : ps) {
            const std::size_t n = val(p).size();
            if (Tensor* dp = slot(p))
              for (std::size_t i = 0; i < n; ++i) (*dp)[i] += g[offset + i];
            offset += n;
          }
          return;
        }
        std::size_t offset = 0;
        for (std::size_t p : ps) {
          const std::size_t w = val(p).cols();
          if (Tensor* dp = slot(p))
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t j = 0; j < w; ++j) (*dp)(r, j) += g(r, offset + j);
          offset += w;
        }
        return;
      }
      case OpKind::relu: {
        const Tensor& x = val(ps[0]);
        if (Tensor* dx = slot(ps[0]))
          for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) (*dx)[i] += g[i];
        return;
      }
      case OpKind::tanh: {
        if (Tensor* dx = slot(ps[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * (1.0 - node.value[i] * node.value[i]);
        return;
      }
      case OpKind::exp: {
        if (Tensor* dx = slot(ps[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * node.value[i];
        return;
      }
      case OpKind::log: {
        const Tensor& x = val(ps[0]);
        if (Tensor* dx = slot(ps[0]))
          for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] / x[i];
        return;
      }
      case OpKind::clamp_min: {
        const Tensor& x = val(ps[0]);
        if (Tensor* dx = slot(ps[0]))
          for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] >= node.scalar) (*dx)[i] += g[i];
        return;
      }
      case OpKind::mean: {
        if (Tensor* dx = slot(ps[0])) {
          const double share = g[0] / static_cast<double>(dx->size());
          for (double& v : dx->values()) v += share;
        }
        return;
      }
      case OpKind::sum: {
        if (Tensor* dx = slot(ps[0]))
          for (double& v : dx->values()) v += g[0];
        return;
      }
      case OpKind::sum_sq: {
        const Tensor& x = val(ps[0]);
        if (Tensor* dx = slot(ps[0]))
          for (std::size_t i = 0; i < x.size(); ++i) (*dx)[i] += 2.0 * x[i] * g[0];
        return;
      }
      case OpKind::row_sum: {
        if (Tensor* dx = slot(ps[0]))
          for (std::size_t r = 0; r < dx->rows(); ++r)
            for (double& v : dx->row(r)) v += g[r];
        return;
      }
      case OpKind::diag: {
        if (Tensor* dx = slot(ps[0]))
          for (std::size_t r = 0; r < dx->rows(); ++r) (*dx)(r, r) += g[r];
        return;
      }
      case OpKind::cosine_sim:
        cosine_backward(ps[0], ps[1], g);
        return;
      case OpKind::normalize_rows: {
        if (Tensor* dx = slot(ps[0])) {
          std::vector<double> norms;
          const Tensor u = normalized_rows(val(ps[0]), &norms);
          normalize_rows_backward(u, norms, g, *dx);
        }
        return;
      }
      case OpKind::tile_rows: {
        if (Tensor* dx = slot(ps[0])) {
          const std::size_t block = dx->size();
          for (std::size_t c = 0; c < node.count; ++c)
            for (std::size_t i = 0; i < block; ++i) (*dx)[i] += g[c * block + i];
        }
        return;
      }
      case OpKind::fold_mean: {
        if (Tensor* dx = slot(ps[0])) {
          const double inv = 1.0 / static_cast<double>(node.count);
          const std::size_t block = g.size();
          for (std::size_t c = 0; c < node.count; ++c)
            for (std::size_t i = 0; i < block; ++i) (*dx)[c * block + i] += g[i] * inv;
        }
        return;
      }
    }
  }

  void accumulate(std::size_t p, const Tensor& g, double factor) {
    if (Tensor* dp = slot(p))
      for (std::size_t i = 0; i < g.size(); ++i) (*dp)[i] += factor * g[i];
  }

  void cosine_backward(std::size_t pa, std::size_t pb, const Tensor& g_in) {
    Tensor* da = slot(pa);
    Tensor* db = slot(pb);
    if (!da && !db) return;
    std::vector<double> a_norms, b_norms;
    const Tensor an = normalized_rows(val(pa), &a_norms);
    const Tensor bn = normalized_rows(val(pb), &b_norms);
    const Tensor g = g_in.rank() == 0 ? Tensor(Shape{1, 1}, std::vector<double>{g_in[0]}) : g_in;
    if (da) {
      Tensor d_an(an.shape());
      kernels::gemm_nn(g.rows(), g.cols(), bn.cols(), g.data(), g.cols(), bn.data(), bn.cols(), d_an.data(), d_an.cols());
      normalize_rows_backward(an, a_norms, d_an, *da);
    }
    if (db) {
      Tensor d_bn(bn.shape());
      kernels::gemm_tn(g.rows(), g.cols(), an.cols(), g.data(), g.cols(), an.data(), an.cols(), d_bn.data(), d_bn.cols());
      normalize_rows_backward(bn, b_norms, d_bn, *db);
    }
  }

  const Tape& tape_;
  std::vector<Tensor>& grads_;
};

Gradients backward(const Tape& tape, Var root) {
  if (!root.valid() || root.tape() != &tape) throw InvalidArgument("backward: root not recorded on this tape");
  if (root.value().size() != 1)
    throw ShapeError("backward: root must be scalar, got shape " + to_string(root.value().shape()));
  Gradients out;
  Backprop(tape, out).run(root.id());
  return out;
}

double grad_check(const Objective& objective, std::span<Tensor> params, double step) {
  if (!(step > 0.0)) throw InvalidArgument("grad_check: step must be positive");

  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const Tensor& p : params) leaves.push_back(tape.leaf_ref(p));
    return objective(tape, leaves).value().item();
  };

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.leaf_ref(p));
    const Var root = objective(tape, leaves);
    const Gradients grads = backward(tape, root);
    for (const Var& leaf : leaves) analytic.push_back(grads[leaf]);
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double original = p[i];
      p[i] = original + step;
      const double up = evaluate();
      p[i] = original - step;
      const double down = evaluate();
      p[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace gdcn
