#include "gdcn/contrastive.hpp"

#include <cmath>

#include "gdcn/errors.hpp"

namespace gdcn {

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0)) throw InvalidArgument("contrastive: temperature must be positive");
  if (h_dim == 0) throw InvalidArgument("contrastive: h_dim must be positive");
}

ProjectionHeads::ProjectionHeads(std::size_t fused_dim, const std::vector<std::size_t>& latent_dims, std::size_t h_dim,
                                 Rng& rng)
    : h_dim_(h_dim), fused_head_({fused_dim, h_dim}, rng) {
  for (std::size_t d : latent_dims) view_heads_.emplace_back(std::vector<std::size_t>{d, h_dim}, rng);
}

ProjectionHeads::Bound ProjectionHeads::bind(Tape& tape, ParamBindings* sink) {
  Bound b{fused_head_.bind(tape, sink), {}};
  for (Mlp& head : view_heads_) b.views.push_back(head.bind(tape, sink));
  return b;
}

ProjectionHeads::Bound ProjectionHeads::bind_frozen(Tape& tape) const {
  Bound b{fused_head_.bind_frozen(tape), {}};
  for (const Mlp& head : view_heads_) b.views.push_back(head.bind_frozen(tape));
  return b;
}

ProjectionHeads::Projections ProjectionHeads::project(const Bound& bound, Var fused, std::span<const Var> latents) const {
  if (latents.size() != view_heads_.size())
    throw ShapeError("project: " + std::to_string(latents.size()) + " views for " +
                     std::to_string(view_heads_.size()) + " heads");
  Projections out;
  out.fused = normalize_rows(fused_head_.forward(bound.fused, fused));
  for (std::size_t m = 0; m < latents.size(); ++m) {
    if (latents[m].value().rows() != fused.value().rows())
      throw ShapeError("project: view " + std::to_string(m) + " has " + std::to_string(latents[m].value().rows()) +
                       " rows, fused has " + std::to_string(fused.value().rows()));
    out.views.push_back(normalize_rows(view_heads_[m].forward(bound.views[m], latents[m])));
  }
  return out;
}

void ProjectionHeads::collect(std::vector<ParamRef>& out) {
  fused_head_.collect("heads.fused", out);
  for (std::size_t m = 0; m < view_heads_.size(); ++m) view_heads_[m].collect("heads.view" + std::to_string(m), out);
}

Tensor compute_similarity(const Tensor& h) {
  if (h.rank() != 2) throw ShapeError("compute_similarity: expected a matrix, got " + to_string(h.shape()));
  const std::size_t n = h.rows();
  Tensor s = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < h.cols(); ++k) dot += h(i, k) * h(j, k);
      s(i, j) = 0.5 * (1.0 + dot);
    }
  }
  return s;
}

Var contrastive_loss(Var fused_projection, std::span<const Var> view_projections, const Tensor& similarity,
                     const ContrastiveConfig& config) {
  config.validate();
  const std::size_t n = fused_projection.value().rows();
  if (fused_projection.value().rank() != 2 || n < 2)
    throw ShapeError("contrastive_loss: need a batch of at least 2 samples, got shape " +
                     to_string(fused_projection.value().shape()));
  if (similarity.rank() != 2 || similarity.rows() != n || similarity.cols() != n)
    throw ShapeError("contrastive_loss: similarity shape " + to_string(similarity.shape()) + " for batch of " +
                     std::to_string(n));
  if (view_projections.empty()) throw ShapeError("contrastive_loss: no views");

  Tape& tape = *fused_projection.tape();
  Tensor weights(similarity.shape());
  for (std::size_t i = 0; i < similarity.size(); ++i) weights[i] = 1.0 - similarity[i];
  const Var weight = tape.constant(std::move(weights));

  const double inv_tau = 1.0 / config.temperature;
  const double offset = std::exp(inv_tau);
  Var total;
  for (const Var& view : view_projections) {
    const Var cos = cosine_sim(fused_projection, view);
    const Var denom = clamp_min(shift(row_sum(exp(scale(mul(weight, cos), inv_tau))), -offset), kDenominatorFloor);
    const Var term = sum(sub(scale(diag(cos), inv_tau), log(denom)));
    total = total.valid() ? add(total, term) : term;
  }
  return scale(total, -1.0 / (2.0 * static_cast<double>(n)));
}

double contrastive_loss(const Tensor& fused_projection, std::span<const Tensor> view_projections,
                        const Tensor& similarity, const ContrastiveConfig& config) {
  Tape tape;
  const Var fused = tape.constant_ref(fused_projection);
  std::vector<Var> views;
  for (const Tensor& v : view_projections) views.push_back(tape.constant_ref(v));
  return contrastive_loss(fused, views, similarity, config).value().item();
}

}  // namespace gdcn
