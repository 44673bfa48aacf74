#include "gdcn/sgdf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gdcn/errors.hpp"

namespace gdcn {

NoiseSchedule::NoiseSchedule(std::size_t total_steps) {
  if (total_steps < 1) throw InvalidArgument("noise schedule: T must be at least 1");
  table_.resize(total_steps);
  const double T = static_cast<double>(total_steps);
  for (std::size_t t = 0; t < total_steps; ++t) {
    const double a = 1.0 - std::sqrt(static_cast<double>(t) / T + 1e-4);
    table_[t] = std::clamp(a, kEpsilonFloor, 1.0);
  }
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
  if (t >= table_.size())
    throw InvalidArgument("alpha_bar: time " + std::to_string(t) + " outside [0, " + std::to_string(table_.size()) + ")");
  return table_[t];
}

TimeGrid make_grid(std::size_t total_steps, std::size_t n_points) {
  if (n_points < 2) throw InvalidArgument("make_grid: K must be at least 2");
  if (total_steps < 2) throw InvalidArgument("make_grid: T must be at least 2");
  if (n_points > total_steps)
    throw InvalidArgument("make_grid: K=" + std::to_string(n_points) + " exceeds T=" + std::to_string(total_steps));
  const std::size_t span = total_steps - 1;
  const std::size_t denom = n_points - 1;
  TimeGrid grid;
  for (std::size_t k = 0; k < n_points; ++k) {
    // floor(span - k * span / denom) == span - ceil(k * span / denom)
    const std::size_t offset = (k * span + denom - 1) / denom;
    grid.times.push_back(span - offset);
  }
  for (std::size_t k = 1; k < grid.times.size(); ++k)
    if (grid.times[k] >= grid.times[k - 1]) throw InvalidArgument("make_grid: duplicate time after flooring");
  return grid;
}

std::string to_string(SamplerMode mode) {
  return mode == SamplerMode::ddim_x0 ? "ddim-x0" : "literal-clamped";
}

SamplerMode parse_sampler_mode(const std::string& text) {
  if (text == "ddim-x0") return SamplerMode::ddim_x0;
  if (text == "literal-clamped") return SamplerMode::literal_clamped;
  throw InvalidArgument("unknown sampler mode '" + text + "' (expected ddim-x0 or literal-clamped)");
}

void SamplerConfig::validate() const {
  if (chains < 1) throw InvalidArgument("sampler: B must be at least 1");
  if (grid.n_points() < 2) throw InvalidArgument("sampler: grid needs at least 2 points");
}

Denoiser::Denoiser(std::size_t fused_dim, std::size_t condition_dim, const std::vector<std::size_t>& hidden, Rng& rng)
    : fused_dim_(fused_dim), condition_dim_(condition_dim) {
  std::vector<std::size_t> widths{fused_dim + condition_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(fused_dim);
  mlp_ = Mlp(widths, rng);
}

Var Denoiser::predict(const Mlp::Bound& bound, Var state, Var condition) const {
  const Tensor& s = state.value();
  const Tensor& c = condition.value();
  if (s.rank() != 2 || c.rank() != 2 || s.cols() != fused_dim_ || c.cols() != condition_dim_ || s.rows() != c.rows())
    throw ShapeError("denoiser: state " + to_string(s.shape()) + " and condition " + to_string(c.shape()) +
                     " do not match widths " + std::to_string(fused_dim_) + " + " + std::to_string(condition_dim_));
  return mlp_.forward(bound, concat({state, condition}));
}

Var build_condition(std::span<const Var> latents) {
  if (latents.empty()) throw ShapeError("build_condition: no views");
  const std::size_t rows = latents.front().value().rows();
  for (const Var& z : latents)
    if (z.value().rank() != 2 || z.value().rows() != rows)
      throw ShapeError("build_condition: row-count mismatch between views (" + to_string(latents.front().shape()) +
                       " vs " + to_string(z.shape()) + ")");
  if (latents.size() == 1) return latents.front();
  return concat(latents);
}

Tensor build_condition(std::span<const Tensor> latents) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& z : latents) vars.push_back(tape.constant_ref(z));
  return build_condition(vars).value();
}

Var denoise_step(Var state, Var condition, std::size_t from, std::size_t to, const Denoiser& denoiser,
                 const Mlp::Bound& bound, const NoiseSchedule& schedule, SamplerMode mode) {
  if (!(to < from || (to == 0 && from == 0)))
    throw InvalidArgument("denoise_step: target time " + std::to_string(to) + " must precede " + std::to_string(from));
  const double a_from = schedule.alpha_bar(from);
  const double a_to = schedule.alpha_bar(to);
  if (to == 0) return state;

  const Var prediction = denoiser.predict(bound, state, condition);
  double state_coef = 0.0;
  double prediction_coef = 0.0;
  switch (mode) {
    case SamplerMode::ddim_x0: {
      // eps = (z - sqrt(a_from) z_p) / sqrt(1 - a_from)
      // out = sqrt(a_to) z_p + sqrt(1 - a_to) eps
      state_coef = std::sqrt(1.0 - a_to) / std::sqrt(1.0 - a_from);
      prediction_coef = std::sqrt(a_to) - state_coef * std::sqrt(a_from);
      break;
    }
    case SamplerMode::literal_clamped: {
      const double beta = a_to / a_from;
      const double sigma2 = (1.0 - a_to) / (1.0 - a_from);
      const double gamma = 1.0 - beta - sigma2;
      state_coef = std::sqrt(std::max(beta, 0.0));
      prediction_coef = std::sqrt(std::max(gamma, 0.0));
      break;
    }
  }
  return add(scale(state, state_coef), scale(prediction, prediction_coef));
}

Tensor initial_noise(std::size_t chains, std::span<const std::uint64_t> sample_ids, std::size_t dim,
                     std::uint64_t seed, std::uint64_t first_chain) {
  const std::size_t n = sample_ids.size();
  Tensor noise = Tensor::matrix(chains * n, dim);
  for (std::size_t b = 0; b < chains; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      Rng stream(seed, first_chain + b, sample_ids[i]);
      for (double& v : noise.row(b * n + i)) v = stream.normal();
    }
  }
  return noise;
}

Var fuse(std::span<const Var> latents, const Denoiser& denoiser, const Mlp::Bound& bound,
         const NoiseSchedule& schedule, const SamplerConfig& config, std::span<const std::uint64_t> sample_ids) {
  config.validate();
  const Var condition = build_condition(latents);
  const std::size_t n = condition.value().rows();
  if (n == 0) throw ShapeError("fuse: empty batch");

  std::vector<std::uint64_t> default_ids;
  if (sample_ids.empty()) {
    default_ids.resize(n);
    std::iota(default_ids.begin(), default_ids.end(), 0);
    sample_ids = default_ids;
  }
  if (sample_ids.size() != n)
    throw ShapeError("fuse: " + std::to_string(sample_ids.size()) + " sample ids for " + std::to_string(n) + " rows");

  Tape& tape = *condition.tape();
  Var state = tape.constant(initial_noise(config.chains, sample_ids, denoiser.fused_dim(), config.seed, config.first_chain));
  const Var tiled = config.chains == 1 ? condition : tile_rows(condition, config.chains);
  const auto& times = config.grid.times;
  for (std::size_t k = 1; k < times.size(); ++k)
    state = denoise_step(state, tiled, times[k - 1], times[k], denoiser, bound, schedule, config.mode);
  return fold_mean(state, config.chains);
}

Tensor fuse(std::span<const Tensor> latents, const Denoiser& denoiser, const NoiseSchedule& schedule,
            const SamplerConfig& config, std::span<const std::uint64_t> sample_ids) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& z : latents) vars.push_back(tape.constant_ref(z));
  const Mlp::Bound bound = denoiser.bind_frozen(tape);
  return fuse(vars, denoiser, bound, schedule, config, sample_ids).value();
}

}  // namespace gdcn
