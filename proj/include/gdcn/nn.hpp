#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdcn/rng.hpp"
#include "gdcn/tensor.hpp"

namespace gdcn {

/// A named, mutable reference to a model parameter.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

/// Parameter leaves of one forward pass, paired with the tensors they alias.
struct ParamBindings {
  std::vector<Tensor*> tensors;
  std::vector<Var> vars;

  Var bind(Tape& tape, Tensor& param) {
    tensors.push_back(&param);
    vars.push_back(tape.leaf_ref(param));
    return vars.back();
  }
};

/// Fully connected stack: relu between layers, linear output.
///
/// Weights are stored fan_in x fan_out so a batch of row vectors multiplies
/// on the left. Initialization draws weights uniformly from [-a, a] with
/// a = sqrt(6 / (fan_in + fan_out)); biases start at zero.
class Mlp {
 public:
  struct Bound {
    std::vector<Var> weights;
    std::vector<Var> biases;
  };

  Mlp() = default;
  Mlp(const std::vector<std::size_t>& widths, Rng& rng);

  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t depth() const { return weights_.size(); }

  Tensor& weight(std::size_t layer) { return weights_.at(layer); }
  Tensor& bias(std::size_t layer) { return biases_.at(layer); }
  const Tensor& weight(std::size_t layer) const { return weights_.at(layer); }
  const Tensor& bias(std::size_t layer) const { return biases_.at(layer); }

  /// Records every parameter on the tape. When `sink` is given the bindings
  /// are appended to it (for gradient lookup by the optimizer).
  Bound bind(Tape& tape, ParamBindings* sink = nullptr);
  /// Binds parameters as constants: forward only, no gradient.
  Bound bind_frozen(Tape& tape) const;

  Var forward(const Bound& bound, Var x) const;

  void collect(const std::string& prefix, std::vector<ParamRef>& out);

 private:
  std::vector<std::size_t> widths_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Copies the selected rows of a matrix, in the given order.
Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows);

}  // namespace gdcn
