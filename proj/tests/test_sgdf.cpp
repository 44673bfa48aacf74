#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gdcn/errors.hpp"
#include "gdcn/sgdf.hpp"
#include "test_util.hpp"

using namespace gdcn;

namespace {

// Denoiser whose output is the constant `value` (final layer weights zeroed).
Denoiser constant_denoiser(std::size_t d, std::size_t cond, const std::vector<double>& value) {
  Rng rng(99);
  Denoiser den(d, cond, {6}, rng);
  Mlp& mlp = den.mlp();
  for (double& w : mlp.weight(mlp.depth() - 1).values()) w = 0.0;
  for (std::size_t j = 0; j < d; ++j) mlp.bias(mlp.depth() - 1)[j] = value[j];
  return den;
}

double alpha_formula(std::size_t t, std::size_t T) {
  return std::clamp(1.0 - std::sqrt(static_cast<double>(t) / static_cast<double>(T) + 1e-4), 1e-6, 1.0);
}

Var one_step(const Tensor& state, std::size_t from, std::size_t to, const Denoiser& den, const NoiseSchedule& s,
             SamplerMode mode, Tape& tape) {
  const Mlp::Bound b = den.bind_frozen(tape);
  const Var st = tape.constant(state);
  const Var cond = tape.constant(Tensor::matrix(state.rows(), den.condition_dim()));
  return denoise_step(st, cond, from, to, den, b, s, mode);
}

}  // namespace

TEST(NoiseSchedule, AlphaBarAtZeroIsExactly099) {
  for (std::size_t T : {2u, 10u, 100u, 1000u, 4096u}) EXPECT_EQ(NoiseSchedule(T).alpha_bar(0), 0.99);
}

TEST(NoiseSchedule, KnownValues) {
  const NoiseSchedule s(1000);
  EXPECT_NEAR(s.alpha_bar(500), 0.292822, 1e-6);
  EXPECT_NEAR(s.alpha_bar(999), 0.000450, 1e-6);
  EXPECT_NEAR(s.alpha_bar(500), 0.2928225116705142, 1e-15);
  EXPECT_THROW((void)s.alpha_bar(1000), InvalidArgument);
}

TEST(NoiseSchedule, NonIncreasingAndClamped) {
  for (std::size_t T : {10u, 100u, 1000u}) {
    const NoiseSchedule s(T);
    for (std::size_t t = 1; t < T; ++t) EXPECT_LE(s.alpha_bar(t), s.alpha_bar(t - 1));
    for (double a : s.table()) {
      EXPECT_GE(a, NoiseSchedule::kEpsilonFloor);
      EXPECT_LE(a, 1.0);
    }
  }
}

TEST(MakeGrid, HandEvaluatedExamples) {
  EXPECT_EQ(make_grid(10, 5).times, (std::vector<std::size_t>{9, 6, 4, 2, 0}));
  EXPECT_EQ(make_grid(1000, 5).times, (std::vector<std::size_t>{999, 749, 499, 249, 0}));
  EXPECT_EQ(make_grid(37, 2).times, (std::vector<std::size_t>{36, 0}));
}

TEST(MakeGrid, RejectsInvalidRequests) {
  EXPECT_THROW((void)make_grid(10, 1), InvalidArgument);
  EXPECT_THROW((void)make_grid(10, 0), InvalidArgument);
  EXPECT_THROW((void)make_grid(1, 1), InvalidArgument);
  EXPECT_THROW((void)make_grid(5, 6), InvalidArgument);
}

TEST(MakeGrid, EndpointsAndFloorFormulaOnRandomPairs) {
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t T = 2 + rng.below(9999);
    const std::size_t K = 2 + rng.below(std::min<std::size_t>(T, 100) - 1);
    const TimeGrid g = make_grid(T, K);
    ASSERT_EQ(g.n_points(), K);
    EXPECT_EQ(g.times.front(), T - 1);
    EXPECT_EQ(g.times.back(), 0u);
    for (std::size_t k = 0; k < K; ++k) {
      // floor((T - 1)(K - 1 - k) / (K - 1)) in exact integers.
      EXPECT_EQ(g.times[k], (T - 1) * (K - 1 - k) / (K - 1));
      if (k > 0) {
        EXPECT_LT(g.times[k], g.times[k - 1]);
      }
    }
  }
}

TEST(BuildCondition, ConcatenatesViewsOnceInOrder) {
  const std::vector<Tensor> z = {Tensor::from_rows({{1, 2}}), Tensor::from_rows({{3, 4}})};
  EXPECT_EQ(build_condition(z), Tensor::from_rows({{1, 2, 3, 4}}));
  const std::vector<Tensor> single = {Tensor::from_rows({{5, 6}, {7, 8}})};
  EXPECT_EQ(build_condition(single), single[0]);
}

TEST(BuildCondition, WidthIsViewsTimesLatent) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 1 + rng.below(5);
    const std::size_t d = 1 + rng.below(9);
    std::vector<Tensor> z;
    for (std::size_t v = 0; v < m; ++v) z.push_back(test::random_tensor({4, d}, rng));
    EXPECT_EQ(build_condition(z).shape(), (Shape{4, m * d}));
  }
}

TEST(BuildCondition, RowMismatchThrows) {
  const std::vector<Tensor> z = {Tensor::matrix(2, 3), Tensor::matrix(3, 3)};
  EXPECT_THROW((void)build_condition(z), ShapeError);
}

TEST(DenoiseStep, StepToTimeZeroReturnsStateWithoutDenoiser) {
  const Denoiser den = constant_denoiser(2, 3, {7.0, 7.0});
  const NoiseSchedule s(10);
  Tape tape;
  const Tensor state = Tensor::from_rows({{0.3, -1.2}, {2.0, 0.1}});
  const std::size_t before = tape.size();
  const Var out = one_step(state, 2, 0, den, s, SamplerMode::ddim_x0, tape);
  EXPECT_EQ(out.value(), state);
  // Only the frozen parameters, state and condition were recorded.
  for (std::size_t id = before; id < tape.size(); ++id) EXPECT_NE(tape.kind(id), OpKind::matmul);
}

TEST(DenoiseStep, DdimHandEvaluatedExample) {
  const Denoiser den = constant_denoiser(1, 1, {0.5});
  const NoiseSchedule s(10);
  const double a9 = alpha_formula(9, 10);
  const double a6 = alpha_formula(6, 10);
  EXPECT_NEAR(a9, 0.051264, 1e-6);
  EXPECT_NEAR(a6, 0.225339, 1e-6);
  const double eps = (1.0 - std::sqrt(a9) * 0.5) / std::sqrt(1.0 - a9);
  EXPECT_NEAR(eps, 0.910435508696593, 1e-12);
  const double expected = std::sqrt(a6) * 0.5 + std::sqrt(1.0 - a6) * eps;
  EXPECT_NEAR(expected, 1.0386676736364686, 1e-12);
  Tape tape;
  const Var out = one_step(Tensor::from_rows({{1.0}}), 9, 6, den, s, SamplerMode::ddim_x0, tape);
  EXPECT_NEAR(out.value().item(), expected, 1e-12);
}

TEST(DenoiseStep, LiteralModeClampsNegativeGamma) {
  const Denoiser den = constant_denoiser(1, 1, {0.5});
  const NoiseSchedule s(10);
  const double a9 = alpha_formula(9, 10);
  const double a6 = alpha_formula(6, 10);
  const double beta = a6 / a9;
  const double sigma2 = (1.0 - a6) / (1.0 - a9);
  EXPECT_LT(1.0 - beta - sigma2, 0.0);
  Tape tape;
  const Var out = one_step(Tensor::from_rows({{1.0}}), 9, 6, den, s, SamplerMode::literal_clamped, tape);
  EXPECT_EQ(out.value().item(), std::sqrt(beta));
  EXPECT_NEAR(out.value().item(), 2.096581421460309, 1e-12);
}

TEST(DenoiseStep, RejectsNonDecreasingTimes) {
  const Denoiser den = constant_denoiser(1, 1, {0.5});
  const NoiseSchedule s(10);
  Tape tape;
  EXPECT_THROW((void)one_step(Tensor::from_rows({{1.0}}), 3, 5, den, s, SamplerMode::ddim_x0, tape), InvalidArgument);
  EXPECT_THROW((void)one_step(Tensor::from_rows({{1.0}}), 12, 5, den, s, SamplerMode::ddim_x0, tape), InvalidArgument);
}

namespace {

struct FuseFixture {
  std::vector<Tensor> latents;
  Denoiser denoiser;
  NoiseSchedule schedule{1000};

  explicit FuseFixture(std::size_t n = 5, std::size_t d = 3, std::size_t views = 2) {
    Rng rng(31);
    for (std::size_t m = 0; m < views; ++m) latents.push_back(test::random_tensor({n, d}, rng));
    denoiser = Denoiser(d, d * views, {8, 8}, rng);
  }

  SamplerConfig config(std::size_t chains, std::size_t K = 5, std::uint64_t seed = 7) const {
    SamplerConfig c;
    c.chains = chains;
    c.grid = make_grid(1000, K);
    c.seed = seed;
    return c;
  }
};

}  // namespace

TEST(Fuse, SingleChainEqualsItsOwnFinalState) {
  const FuseFixture f;
  const SamplerConfig c = f.config(1);
  // Replay the chain by hand with denoise_step.
  Tape tape;
  std::vector<Var> z;
  for (const Tensor& t : f.latents) z.push_back(tape.constant(t));
  const Var cond = build_condition(z);
  const Mlp::Bound b = f.denoiser.bind_frozen(tape);
  std::vector<std::uint64_t> ids(5);
  std::iota(ids.begin(), ids.end(), 0);
  Var state = tape.constant(initial_noise(1, ids, 3, c.seed, 0));
  for (std::size_t k = 1; k < c.grid.n_points(); ++k)
    state = denoise_step(state, cond, c.grid.times[k - 1], c.grid.times[k], f.denoiser, b, f.schedule, c.mode);
  EXPECT_EQ(fuse(f.latents, f.denoiser, f.schedule, c), state.value());
}

TEST(Fuse, EqualsMeanOfSingleChainRuns) {
  const FuseFixture f;
  const Tensor fused = fuse(f.latents, f.denoiser, f.schedule, f.config(3));
  Tensor mean = Tensor::matrix(5, 3);
  for (std::uint64_t b = 0; b < 3; ++b) {
    SamplerConfig c = f.config(1);
    c.first_chain = b;
    const Tensor one = fuse(f.latents, f.denoiser, f.schedule, c);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += one[i] / 3.0;
  }
  EXPECT_LE(test::max_abs_diff(fused, mean), 1e-12);
}

TEST(Fuse, ConstantDenoiserMatchesStandaloneRecursion) {
  const std::vector<double> v = {0.4, -1.1};
  const Denoiser den = constant_denoiser(2, 4, v);
  const std::size_t T = 50;
  const NoiseSchedule schedule(T);
  Rng rng(5);
  const std::vector<Tensor> latents = {test::random_tensor({3, 2}, rng), test::random_tensor({3, 2}, rng)};
  for (std::size_t K : {2u, 3u, 6u}) {
    SCOPED_TRACE(K);
    SamplerConfig c;
    c.chains = 2;
    c.grid = make_grid(T, K);
    c.seed = 11;
    const Tensor fused = fuse(latents, den, schedule, c);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        double acc = 0.0;
        for (std::uint64_t b = 0; b < 2; ++b) {
          Rng stream(11, b, i);
          double z = 0.0;
          for (std::size_t jj = 0; jj <= j; ++jj) z = stream.normal();
          for (std::size_t k = 1; k < K; ++k) {
            const std::size_t from = (T - 1) * (K - k) / (K - 1);
            const std::size_t to = (T - 1) * (K - 1 - k) / (K - 1);
            if (to == 0) continue;
            const double af = alpha_formula(from, T);
            const double at = alpha_formula(to, T);
            const double eps = (z - std::sqrt(af) * v[j]) / std::sqrt(1.0 - af);
            z = std::sqrt(at) * v[j] + std::sqrt(1.0 - at) * eps;
          }
          acc += z;
        }
        EXPECT_NEAR(fused(i, j), acc / 2.0, 1e-12);
      }
    }
  }
}

TEST(Fuse, BitIdenticalUnderFixedSeed) {
  const FuseFixture f;
  EXPECT_EQ(fuse(f.latents, f.denoiser, f.schedule, f.config(4)), fuse(f.latents, f.denoiser, f.schedule, f.config(4)));
  EXPECT_NE(fuse(f.latents, f.denoiser, f.schedule, f.config(4, 5, 7)),
            fuse(f.latents, f.denoiser, f.schedule, f.config(4, 5, 8)));
}

TEST(Fuse, ExactlyEquivariantUnderSamplePermutation) {
  const FuseFixture f(6);
  const Tensor base = fuse(f.latents, f.denoiser, f.schedule, f.config(3));
  const std::vector<std::size_t> order = {4, 0, 5, 2, 1, 3};
  std::vector<Tensor> permuted;
  for (const Tensor& z : f.latents) permuted.push_back(gather_rows(z, order));
  const std::vector<std::uint64_t> ids(order.begin(), order.end());
  const Tensor out = fuse(permuted, f.denoiser, f.schedule, f.config(3), ids);
  EXPECT_EQ(out, gather_rows(base, order));
}

TEST(Fuse, VarianceAcrossSeedsShrinksWithChains) {
  const FuseFixture f;
  auto spread = [&](std::size_t chains) {
    std::vector<Tensor> runs;
    for (std::uint64_t seed = 0; seed < 20; ++seed) runs.push_back(fuse(f.latents, f.denoiser, f.schedule, f.config(chains, 5, seed)));
    double total = 0.0;
    for (std::size_t i = 0; i < runs[0].size(); ++i) {
      double mean = 0.0;
      for (const Tensor& r : runs) mean += r[i] / 20.0;
      for (const Tensor& r : runs) total += (r[i] - mean) * (r[i] - mean) / 19.0;
    }
    return total / static_cast<double>(runs[0].size());
  };
  const double v1 = spread(1), v4 = spread(4), v8 = spread(8);
  EXPECT_GE(v1, v4);
  EXPECT_GE(v4, v8);
}

TEST(Fuse, GradientsThroughTheUnrolledSamplerPassCheck) {
  FuseFixture f(4, 2, 2);
  std::vector<Tensor> params;
  for (std::size_t l = 0; l < f.denoiser.mlp().depth(); ++l) {
    params.push_back(f.denoiser.mlp().weight(l));
    params.push_back(f.denoiser.mlp().bias(l));
  }
  const std::size_t n_den = params.size();
  params.push_back(f.latents[0]);
  params.push_back(f.latents[1]);
  for (SamplerMode mode : {SamplerMode::ddim_x0, SamplerMode::literal_clamped}) {
    for (std::size_t K : {3u, 5u}) {
      SamplerConfig c = f.config(2, K);
      c.mode = mode;
      const double err = grad_check(
          [&](Tape&, std::span<const Var> p) {
            Mlp::Bound b;
            for (std::size_t l = 0; l < n_den / 2; ++l) {
              b.weights.push_back(p[2 * l]);
              b.biases.push_back(p[2 * l + 1]);
            }
            const std::vector<Var> z = {p[n_den], p[n_den + 1]};
            return sum(tanh(fuse(z, f.denoiser, b, f.schedule, c)));
          },
          params, 1e-6);
      EXPECT_LE(err, 1e-4) << to_string(mode) << " K=" << K;
    }
  }
}

TEST(Fuse, ValidatesConfigAndIds) {
  const FuseFixture f;
  SamplerConfig c = f.config(0);
  EXPECT_THROW((void)fuse(f.latents, f.denoiser, f.schedule, c), InvalidArgument);
  const std::vector<std::uint64_t> ids = {1, 2};
  EXPECT_THROW((void)fuse(f.latents, f.denoiser, f.schedule, f.config(1), ids), ShapeError);
}

TEST(SamplerMode, ParsesBothNames) {
  EXPECT_EQ(parse_sampler_mode("ddim-x0"), SamplerMode::ddim_x0);
  EXPECT_EQ(parse_sampler_mode("literal-clamped"), SamplerMode::literal_clamped);
  EXPECT_EQ(to_string(SamplerMode::literal_clamped), "literal-clamped");
  EXPECT_THROW((void)parse_sampler_mode("ddpm"), InvalidArgument);
}
