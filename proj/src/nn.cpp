#include "gdcn/nn.hpp"

#include <algorithm>
#include <cmath>

#include "gdcn/errors.hpp"

namespace gdcn {

Mlp::Mlp(const std::vector<std::size_t>& widths, Rng& rng) : widths_(widths) {
  if (widths_.size() < 2) throw InvalidArgument("mlp: need at least input and output widths");
  for (std::size_t w : widths_)
    if (w == 0) throw InvalidArgument("mlp: layer widths must be positive");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t fan_in = widths_[l];
    const std::size_t fan_out = widths_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::matrix(fan_in, fan_out);
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
    weights_.push_back(std::move(w));
    biases_.emplace_back(Shape{fan_out});
  }
}

Mlp::Bound Mlp::bind(Tape& tape, ParamBindings* sink) {
  Bound b;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (sink) {
      b.weights.push_back(sink->bind(tape, weights_[l]));
      b.biases.push_back(sink->bind(tape, biases_[l]));
    } else {
      b.weights.push_back(tape.leaf_ref(weights_[l]));
      b.biases.push_back(tape.leaf_ref(biases_[l]));
    }
  }
  return b;
}

Mlp::Bound Mlp::bind_frozen(Tape& tape) const {
  Bound b;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    b.weights.push_back(tape.constant_ref(weights_[l]));
    b.biases.push_back(tape.constant_ref(biases_[l]));
  }
  return b;
}

Var Mlp::forward(const Bound& bound, Var x) const {
  if (x.value().rank() != 2 || x.value().cols() != input_dim())
    throw ShapeError("mlp: input shape " + to_string(x.value().shape()) + " does not match input width " +
                     std::to_string(input_dim()));
  Var h = x;
  for (std::size_t l = 0; l < bound.weights.size(); ++l) {
    h = add_bias(matmul(h, bound.weights[l]), bound.biases[l]);
    if (l + 1 < bound.weights.size()) h = relu(h);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back({prefix + ".layer" + std::to_string(l) + ".weight", &weights_[l]});
    out.push_back({prefix + ".layer" + std::to_string(l) + ".bias", &biases_[l]});
  }
}

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows) {
  Tensor out = Tensor::matrix(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) throw InvalidArgument("gather_rows: row index out of range");
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace gdcn
