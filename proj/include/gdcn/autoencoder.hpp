#pragma once

#include <span>
#include <vector>

#include "gdcn/nn.hpp"

namespace gdcn {

/// Encoder/decoder pair for one view: D_m -> hidden... -> d_m and the mirror
/// image back to D_m.
class ViewAutoencoder {
 public:
  struct Bound {
    Mlp::Bound encoder;
    Mlp::Bound decoder;
  };

  ViewAutoencoder() = default;
  ViewAutoencoder(std::size_t view_index, std::size_t input_dim, std::size_t latent_dim,
                  const std::vector<std::size_t>& hidden, Rng& rng);

  std::size_t view_index() const { return view_index_; }
  std::size_t input_dim() const { return encoder_.input_dim(); }
  std::size_t latent_dim() const { return encoder_.output_dim(); }

  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }

  Bound bind(Tape& tape, ParamBindings* sink = nullptr);
  Bound bind_frozen(Tape& tape) const;

  /// n x D_m -> n x d_m.
  Var encode(const Bound& bound, Var batch) const;
  /// n x d_m -> n x D_m.
  Var decode(const Bound& bound, Var latents) const;

  Tensor encode(const Tensor& batch) const;
  Tensor decode(const Tensor& latents) const;

  void collect(std::vector<ParamRef>& out);

 private:
  std::size_t view_index_ = 0;
  Mlp encoder_;
  Mlp decoder_;
};

/// Sum over views and samples of the squared reconstruction error,
/// sum_m sum_i ||x_i^m - g^m(f^m(x_i^m))||^2. Also returns the latents via
/// `latents_out` when given, so callers can reuse the encoder pass.
Var reconstruction_loss(std::span<const ViewAutoencoder> aes, std::span<const ViewAutoencoder::Bound> bound,
                        std::span<const Var> batch, std::vector<Var>* latents_out = nullptr);

double reconstruction_loss(std::span<const ViewAutoencoder> aes, std::span<const Tensor> batch);

}  // namespace gdcn
