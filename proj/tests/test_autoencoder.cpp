#include <gtest/gtest.h>

#include "gdcn/autoencoder.hpp"
#include "gdcn/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gdcn;

namespace {

std::vector<ViewAutoencoder> make_aes(const std::vector<std::size_t>& dims, std::size_t latent,
                                      std::vector<std::size_t> hidden, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ViewAutoencoder> aes;
  for (std::size_t m = 0; m < dims.size(); ++m) aes.emplace_back(m, dims[m], latent, hidden, rng);
  return aes;
}

}  // namespace

TEST(Autoencoder, WidthsMirror) {
  const auto aes = make_aes({7}, 4, {10, 6}, 1);
  EXPECT_EQ(aes[0].encoder().widths(), (std::vector<std::size_t>{7, 10, 6, 4}));
  EXPECT_EQ(aes[0].decoder().widths(), (std::vector<std::size_t>{4, 6, 10, 7}));
  EXPECT_EQ(aes[0].latent_dim(), 4u);
}

TEST(Autoencoder, InitializationBounds) {
  const auto aes = make_aes({30}, 20, {40}, 2);
  const Tensor& w = aes[0].encoder().weight(0);
  const double limit = std::sqrt(6.0 / (30 + 40));
  for (double v : w.values()) EXPECT_LE(std::abs(v), limit);
  for (double v : aes[0].encoder().bias(0).values()) EXPECT_EQ(v, 0.0);
}

TEST(Autoencoder, ZeroFinalLayerGivesZeroLatents) {
  auto aes = make_aes({5}, 3, {8}, 3);
  Mlp& enc = aes[0].encoder();
  for (double& v : enc.weight(enc.depth() - 1).values()) v = 0.0;
  Rng rng(4);
  const Tensor z = aes[0].encode(test::random_tensor({6, 5}, rng));
  EXPECT_EQ(z, Tensor::matrix(6, 3));
}

TEST(Autoencoder, ShapeContracts) {
  const auto aes = make_aes({5}, 3, {8}, 5);
  Rng rng(6);
  const Tensor x = test::random_tensor({1, 5}, rng);
  const Tensor z = aes[0].encode(x);
  EXPECT_EQ(z.shape(), (Shape{1, 3}));
  EXPECT_EQ(aes[0].decode(z).shape(), (Shape{1, 5}));
  EXPECT_THROW((void)aes[0].encode(Tensor::matrix(2, 4)), ShapeError);
  EXPECT_THROW((void)aes[0].decode(Tensor::matrix(2, 5)), ShapeError);
}

TEST(Autoencoder, EncodeAndDecodeGradientsMatchFiniteDifferences) {
  auto aes = make_aes({4}, 3, {5}, 7);
  Rng rng(8);
  const Tensor x = test::random_tensor({3, 4}, rng);
  for (int part = 0; part < 2; ++part) {
    SCOPED_TRACE(part == 0 ? "encode" : "decode");
    Mlp& mlp = part == 0 ? aes[0].encoder() : aes[0].decoder();
    const Tensor input = part == 0 ? x : test::random_tensor({3, 3}, rng);
    std::vector<Tensor> params;
    for (std::size_t l = 0; l < mlp.depth(); ++l) {
      params.push_back(mlp.weight(l));
      params.push_back(mlp.bias(l));
    }
    const double err = grad_check(
        [&](Tape& tape, std::span<const Var> p) {
          Mlp::Bound b;
          for (std::size_t l = 0; l < mlp.depth(); ++l) {
            b.weights.push_back(p[2 * l]);
            b.biases.push_back(p[2 * l + 1]);
          }
          return mean(mlp.forward(b, tape.constant(input)));
        },
        params, 1e-6);
    EXPECT_LE(err, 1e-5);
  }
}

TEST(ReconstructionLoss, KnownValue) {
  // Identity-like autoencoder replaced by direct evaluation: x = [[1, 0]],
  // x_hat = [[0, 0]] gives 1.
  auto aes = make_aes({2}, 2, {}, 9);
  for (double& v : aes[0].decoder().weight(0).values()) v = 0.0;
  EXPECT_DOUBLE_EQ(reconstruction_loss(aes, std::vector<Tensor>{Tensor::from_rows({{1, 0}})}), 1.0);
}

TEST(ReconstructionLoss, PerfectReconstructionIsZero) {
  auto aes = make_aes({3}, 3, {}, 10);
  // Single linear layers: encoder W, decoder W^-1 via identity on both.
  for (Mlp* mlp : {&aes[0].encoder(), &aes[0].decoder()}) {
    Tensor& w = mlp->weight(0);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) w(i, j) = i == j ? 1.0 : 0.0;
  }
  Rng rng(11);
  EXPECT_EQ(reconstruction_loss(aes, std::vector<Tensor>{test::random_tensor({5, 3}, rng)}), 0.0);
}

TEST(ReconstructionLoss, MatchesDirectTranscription) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const std::size_t views = 1 + rng.below(3);
    std::vector<std::size_t> dims;
    for (std::size_t m = 0; m < views; ++m) dims.push_back(1 + rng.below(6));
    const auto aes = make_aes(dims, 1 + rng.below(4), {1 + rng.below(7)}, 100 + trial);
    std::vector<Tensor> batch;
    std::vector<oracle::Matrix> x, x_hat;
    for (std::size_t m = 0; m < views; ++m) {
      batch.push_back(test::random_tensor({n, dims[m]}, rng));
      x.push_back(oracle::to_matrix(batch.back()));
      x_hat.push_back(oracle::mlp_forward(aes[m].decoder(), oracle::mlp_forward(aes[m].encoder(), x.back())));
    }
    const double expected = oracle::reconstruction(x, x_hat);
    EXPECT_NEAR(reconstruction_loss(aes, batch), expected, 1e-10 * std::max(1.0, expected));
  }
}

TEST(ReconstructionLoss, InvariantToSampleOrder) {
  const auto aes = make_aes({3, 2}, 2, {4}, 13);
  Rng rng(14);
  std::vector<Tensor> batch = {test::random_tensor({6, 3}, rng), test::random_tensor({6, 2}, rng)};
  const double a = reconstruction_loss(aes, batch);
  const std::vector<std::size_t> order = {5, 2, 0, 4, 1, 3};
  std::vector<Tensor> shuffled = {gather_rows(batch[0], order), gather_rows(batch[1], order)};
  EXPECT_NEAR(reconstruction_loss(aes, shuffled), a, 1e-12 * a);
  EXPECT_GE(a, 0.0);
}

TEST(ReconstructionLoss, GradientCheck) {
  auto aes = make_aes({3, 2}, 2, {4}, 15);
  Rng rng(16);
  const std::vector<Tensor> batch = {test::random_tensor({4, 3}, rng), test::random_tensor({4, 2}, rng)};
  std::vector<ParamRef> refs;
  for (auto& ae : aes) ae.collect(refs);
  std::vector<Tensor> params;
  for (const ParamRef& r : refs) params.push_back(*r.tensor);
  const double err = grad_check(
      [&](Tape& tape, std::span<const Var> p) {
        std::vector<ViewAutoencoder::Bound> bound;
        std::size_t pos = 0;
        for (const auto& ae : aes) {
          ViewAutoencoder::Bound b;
          for (std::size_t l = 0; l < ae.encoder().depth(); ++l) {
            b.encoder.weights.push_back(p[pos++]);
            b.encoder.biases.push_back(p[pos++]);
          }
          for (std::size_t l = 0; l < ae.decoder().depth(); ++l) {
            b.decoder.weights.push_back(p[pos++]);
            b.decoder.biases.push_back(p[pos++]);
          }
          bound.push_back(b);
        }
        std::vector<Var> inputs;
        for (const Tensor& x : batch) inputs.push_back(tape.constant(x));
        return reconstruction_loss(aes, bound, inputs);
      },
      params, 1e-6);
  EXPECT_LE(err, 1e-4);
}

TEST(ReconstructionLoss, RejectsMissingViews) {
  const auto aes = make_aes({3, 2}, 2, {4}, 17);
  EXPECT_THROW((void)reconstruction_loss(aes, std::vector<Tensor>{Tensor::matrix(2, 3)}), ShapeError);
}
