#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdcn/contrastive.hpp"
#include "gdcn/sgdf.hpp"
#include "json.hpp"

namespace gdcn {

enum class Ablation { none, no_sgdf, no_cl };

/// Which representation K-Means clusters at evaluation time.
enum class Representation { fused, projected };

struct AutoencoderSettings {
  std::vector<std::size_t> hidden{500, 500};
  std::size_t latent_dim = 64;
};

struct SgdfSettings {
  std::size_t total_steps = 1000;  // T
  std::size_t grid_points = 5;     // K
  std::size_t chains = 4;          // B
  SamplerMode mode = SamplerMode::ddim_x0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{256, 256};
};

struct TrainConfig {
  std::size_t pretrain_epochs = 200;
  std::size_t finetune_epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Evaluate clustering accuracy every n-th epoch (0 disables).
  std::size_t log_acc_every = 1;
};

struct EvalSettings {
  Representation representation = Representation::fused;
  std::size_t kmeans_restarts = 10;
};

struct ModelConfig {
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::none;
  AutoencoderSettings ae;
  SgdfSettings sgdf;
  ContrastiveConfig cl;
  TrainConfig train;
  EvalSettings eval;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

std::string to_string(Ablation ablation);
std::string to_string(Representation representation);

/// Builds a config from JSON. Accepts nested objects ({"sgdf": {"K": 5}}),
/// dotted keys ({"sgdf.K": 5}) or a mix. Unknown keys, wrong types and
/// invalid values raise ConfigError naming the key. `sgdf.seed` defaults to
/// `seed` when absent.
ModelConfig parse_model_config(const nlohmann::json& json);

/// Fully populated nested JSON; parse_model_config(model_config_to_json(c))
/// reproduces c.
nlohmann::ordered_json model_config_to_json(const ModelConfig& config);

/// Turns {"a.b": 1, "a": {"c": 2}} into {"a": {"b": 1, "c": 2}}. Throws
/// ConfigError when a dotted path collides with a non-object value.
nlohmann::json unflatten(const nlohmann::json& json);

}  // namespace gdcn
