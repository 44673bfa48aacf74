#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdcn/nn.hpp"

namespace gdcn {

/// Square-root noise schedule: alpha_bar(t) = 1 - sqrt(t / T + 1e-4), clamped
/// to [1e-6, 1], tabulated for t in [0, T - 1].
class NoiseSchedule {
 public:
  static constexpr double kEpsilonFloor = 1e-6;

  explicit NoiseSchedule(std::size_t total_steps);

  std::size_t total_steps() const noexcept { return table_.size(); }
  /// Throws InvalidArgument when t >= T.
  double alpha_bar(std::size_t t) const;
  std::span<const double> table() const noexcept { return table_; }

 private:
  std::vector<double> table_;
};

/// Accelerated sampling times, strictly decreasing from T - 1 to 0.
struct TimeGrid {
  std::vector<std::size_t> times;
  std::size_t n_points() const noexcept { return times.size(); }
};

/// tau_k = floor(T - 1 - k (T - 1) / (K - 1)) for k = 0..K-1, computed in
/// exact integer arithmetic. Requires 2 <= K <= T.
TimeGrid make_grid(std::size_t total_steps, std::size_t n_points);

enum class SamplerMode {
  /// The denoiser output is the predicted clean signal; deterministic
  /// DDIM-style update.
  ddim_x0,
  /// beta = a_s / a_t, sigma^2 = (1 - a_s) / (1 - a_t), gamma = 1 - beta - sigma^2,
  /// output sqrt(beta) z_t + sqrt(gamma) z_p with negative radicands clamped
  /// to zero.
  literal_clamped,
};

std::string to_string(SamplerMode mode);
/// Accepts "ddim-x0" and "literal-clamped".
SamplerMode parse_sampler_mode(const std::string& text);

struct SamplerConfig {
  std::size_t chains = 4;
  TimeGrid grid;
  SamplerMode mode = SamplerMode::ddim_x0;
  std::uint64_t seed = 0;
  /// Index of the first chain's random stream; chain b draws from stream
  /// first_chain + b, so a single-chain run can replay any chain of a wider one.
  std::uint64_t first_chain = 0;

  void validate() const;
};

/// Conditional denoiser z_p = MLP(cat(z_t, c)).
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(std::size_t fused_dim, std::size_t condition_dim, const std::vector<std::size_t>& hidden, Rng& rng);

  std::size_t fused_dim() const noexcept { return fused_dim_; }
  std::size_t condition_dim() const noexcept { return condition_dim_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

  Mlp::Bound bind(Tape& tape, ParamBindings* sink = nullptr) { return mlp_.bind(tape, sink); }
  Mlp::Bound bind_frozen(Tape& tape) const { return mlp_.bind_frozen(tape); }

  Var predict(const Mlp::Bound& bound, Var state, Var condition) const;

  void collect(std::vector<ParamRef>& out) { mlp_.collect("denoiser", out); }

 private:
  std::size_t fused_dim_ = 0;
  std::size_t condition_dim_ = 0;
  Mlp mlp_;
};

/// Row-wise concatenation of the per-view latents, each view once, in view
/// order.
Var build_condition(std::span<const Var> latents);
Tensor build_condition(std::span<const Tensor> latents);

/// One reverse step of the sampler from time `from` to time `to`. When `to`
/// is 0 the state is returned unchanged and the denoiser is not evaluated.
Var denoise_step(Var state, Var condition, std::size_t from, std::size_t to, const Denoiser& denoiser,
                 const Mlp::Bound& bound, const NoiseSchedule& schedule, SamplerMode mode);

/// Standard-normal starting states, (chains * n) x dim. Row b * n + i is drawn
/// from the stream keyed by (seed, first_chain + b, sample_ids[i]).
Tensor initial_noise(std::size_t chains, std::span<const std::uint64_t> sample_ids, std::size_t dim,
                     std::uint64_t seed, std::uint64_t first_chain);

/// Runs `config.chains` reverse chains per sample along the grid, all
/// conditioned on build_condition(latents), and averages their final states.
/// `sample_ids` key the per-sample noise streams (default: row index), which
/// makes the result equivariant under permutations of the samples.
Var fuse(std::span<const Var> latents, const Denoiser& denoiser, const Mlp::Bound& bound,
         const NoiseSchedule& schedule, const SamplerConfig& config, std::span<const std::uint64_t> sample_ids = {});

Tensor fuse(std::span<const Tensor> latents, const Denoiser& denoiser, const NoiseSchedule& schedule,
            const SamplerConfig& config, std::span<const std::uint64_t> sample_ids = {});

}  // namespace gdcn
