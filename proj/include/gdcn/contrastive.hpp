#pragma once

#include <span>
#include <vector>

#include "gdcn/nn.hpp"

namespace gdcn {

struct ContrastiveConfig {
  double temperature = 0.5;
  std::size_t h_dim = 128;
  /// The similarity matrix never carries gradient; kept for the config echo.
  bool similarity_detached = true;

  void validate() const;
};

/// Lower bound applied to each row's denominator before the log.
inline constexpr double kDenominatorFloor = 1e-12;

/// Single linear layer per input followed by L2 row normalization: one head
/// for the fused representation, one per view.
class ProjectionHeads {
 public:
  struct Bound {
    Mlp::Bound fused;
    std::vector<Mlp::Bound> views;
  };

  struct Projections {
    Var fused;
    std::vector<Var> views;
  };

  ProjectionHeads() = default;
  ProjectionHeads(std::size_t fused_dim, const std::vector<std::size_t>& latent_dims, std::size_t h_dim, Rng& rng);

  std::size_t h_dim() const noexcept { return h_dim_; }
  std::size_t n_views() const noexcept { return view_heads_.size(); }
  Mlp& fused_head() { return fused_head_; }
  Mlp& view_head(std::size_t m) { return view_heads_.at(m); }
  const Mlp& fused_head() const { return fused_head_; }
  const Mlp& view_head(std::size_t m) const { return view_heads_.at(m); }

  Bound bind(Tape& tape, ParamBindings* sink = nullptr);
  Bound bind_frozen(Tape& tape) const;

  /// Every returned row has unit L2 norm.
  Projections project(const Bound& bound, Var fused, std::span<const Var> latents) const;

  void collect(std::vector<ParamRef>& out);

 private:
  std::size_t h_dim_ = 0;
  Mlp fused_head_;
  std::vector<Mlp> view_heads_;
};

/// S_ij = (1 + <h_i, h_j>) / 2 off the diagonal, S_ii = 0. Rows are expected
/// to be unit-normalized. The result is a plain tensor: no gradient flows
/// through it.
Tensor compute_similarity(const Tensor& fused_projection);

/// L = -1/(2n) sum_i sum_m log( exp(C_ii^m / tau) /
///       max(sum_j exp((1 - S_ij) C_ij^m / tau) - exp(1 / tau), 1e-12) )
/// with C^m the cosine matrix between fused rows and view-m rows.
/// Requires n >= 2.
Var contrastive_loss(Var fused_projection, std::span<const Var> view_projections, const Tensor& similarity,
                     const ContrastiveConfig& config);

double contrastive_loss(const Tensor& fused_projection, std::span<const Tensor> view_projections,
                        const Tensor& similarity, const ContrastiveConfig& config);

}  // namespace gdcn
