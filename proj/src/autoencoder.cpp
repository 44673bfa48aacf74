#include "gdcn/autoencoder.hpp"

#include "gdcn/errors.hpp"

namespace gdcn {

namespace {

std::vector<std::size_t> stack_widths(std::size_t from, const std::vector<std::size_t>& hidden, std::size_t to) {
  std::vector<std::size_t> w{from};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(to);
  return w;
}

}  // namespace

ViewAutoencoder::ViewAutoencoder(std::size_t view_index, std::size_t input_dim, std::size_t latent_dim,
                                 const std::vector<std::size_t>& hidden, Rng& rng)
    : view_index_(view_index),
      encoder_(stack_widths(input_dim, hidden, latent_dim), rng),
      decoder_(stack_widths(latent_dim, std::vector<std::size_t>(hidden.rbegin(), hidden.rend()), input_dim), rng) {}

ViewAutoencoder::Bound ViewAutoencoder::bind(Tape& tape, ParamBindings* sink) {
  return {encoder_.bind(tape, sink), decoder_.bind(tape, sink)};
}

ViewAutoencoder::Bound ViewAutoencoder::bind_frozen(Tape& tape) const {
  return {encoder_.bind_frozen(tape), decoder_.bind_frozen(tape)};
}

Var ViewAutoencoder::encode(const Bound& bound, Var batch) const {
  if (batch.value().rank() != 2 || batch.value().cols() != input_dim())
    throw ShapeError("encode: view " + std::to_string(view_index_) + " expects " + std::to_string(input_dim()) +
                     " columns, got shape " + to_string(batch.value().shape()));
  return encoder_.forward(bound.encoder, batch);
}

Var ViewAutoencoder::decode(const Bound& bound, Var latents) const {
  if (latents.value().rank() != 2 || latents.value().cols() != latent_dim())
    throw ShapeError("decode: view " + std::to_string(view_index_) + " expects " + std::to_string(latent_dim()) +
                     " columns, got shape " + to_string(latents.value().shape()));
  return decoder_.forward(bound.decoder, latents);
}

Tensor ViewAutoencoder::encode(const Tensor& batch) const {
  Tape tape;
  const Bound b = bind_frozen(tape);
  return encode(b, tape.constant(batch)).value();
}

Tensor ViewAutoencoder::decode(const Tensor& latents) const {
  Tape tape;
  const Bound b = bind_frozen(tape);
  return decode(b, tape.constant(latents)).value();
}

void ViewAutoencoder::collect(std::vector<ParamRef>& out) {
  const std::string prefix = "view" + std::to_string(view_index_);
  encoder_.collect(prefix + ".encoder", out);
  decoder_.collect(prefix + ".decoder", out);
}

Var reconstruction_loss(std::span<const ViewAutoencoder> aes, std::span<const ViewAutoencoder::Bound> bound,
                        std::span<const Var> batch, std::vector<Var>* latents_out) {
  if (aes.empty() || aes.size() != batch.size() || aes.size() != bound.size())
    throw ShapeError("reconstruction_loss: need one batch matrix per view (" + std::to_string(aes.size()) +
                     " autoencoders, " + std::to_string(batch.size()) + " views)");
  if (latents_out) latents_out->clear();
  Var total;
  for (std::size_t m = 0; m < aes.size(); ++m) {
    const Var z = aes[m].encode(bound[m], batch[m]);
    if (latents_out) latents_out->push_back(z);
    const Var err = sum_sq(sub(batch[m], aes[m].decode(bound[m], z)));
    total = total.valid() ? add(total, err) : err;
  }
  return total;
}

double reconstruction_loss(std::span<const ViewAutoencoder> aes, std::span<const Tensor> batch) {
  Tape tape;
  std::vector<ViewAutoencoder::Bound> bound;
  std::vector<Var> inputs;
  for (std::size_t m = 0; m < aes.size(); ++m) bound.push_back(aes[m].bind_frozen(tape));
  for (const Tensor& x : batch) inputs.push_back(tape.constant(x));
  return reconstruction_loss(aes, bound, inputs).value().item();
}

}  // namespace gdcn
