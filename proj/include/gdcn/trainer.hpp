#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gdcn/autoencoder.hpp"
#include "gdcn/config.hpp"
#include "gdcn/contrastive.hpp"
#include "gdcn/data.hpp"
#include "gdcn/sgdf.hpp"

namespace gdcn {

enum class Phase { pretrain, finetune };

std::string to_string(Phase phase);

/// Per-view autoencoders, the fusion denoiser and the projection heads.
///
/// Every component is built regardless of the ablation so checkpoints share
/// one layout; the ablation decides which parts take part in training and in
/// the fused representation. Parameters are initialized from
/// Rng(config.seed, 1) in the order autoencoders (view order), denoiser,
/// heads.
class Model {
 public:
  struct Bound {
    std::vector<ViewAutoencoder::Bound> autoencoders;
    Mlp::Bound denoiser;
    ProjectionHeads::Bound heads;
  };

  Model(std::vector<std::size_t> view_dims, ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<std::size_t>& view_dims() const noexcept { return view_dims_; }
  std::size_t n_views() const noexcept { return view_dims_.size(); }
  std::size_t latent_dim() const noexcept { return config_.ae.latent_dim; }
  /// Width of the representation fed to the fused projection head: d for the
  /// diffusion fusion, M * d for the concatenated condition (no-sgdf).
  std::size_t fused_dim() const noexcept;

  std::vector<ViewAutoencoder>& autoencoders() noexcept { return autoencoders_; }
  const std::vector<ViewAutoencoder>& autoencoders() const noexcept { return autoencoders_; }
  Denoiser& denoiser() noexcept { return denoiser_; }
  const Denoiser& denoiser() const noexcept { return denoiser_; }
  ProjectionHeads& heads() noexcept { return heads_; }
  const ProjectionHeads& heads() const noexcept { return heads_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

  /// Sampler settings with the given noise seed.
  SamplerConfig sampler(std::uint64_t noise_seed) const;

  /// All parameters, named, in a fixed order (autoencoders, denoiser, heads).
  std::vector<ParamRef> parameters();
  std::vector<const Tensor*> parameter_values() const;
  /// Names of parameters updated in the given phase.
  bool trainable(const std::string& name, Phase phase) const;

  /// Distributes one Var per parameter (in parameters() order) into the
  /// structure used by the forward pass.
  Bound assemble(std::span<const Var> vars) const;
  /// Binds every parameter as a differentiable leaf.
  Bound bind(Tape& tape, ParamBindings& sink);
  Bound bind_frozen(Tape& tape) const;

  /// Throws ShapeError unless the dataset views match the model's input widths.
  void check_compatible(const MultiViewDataset& ds) const;

  std::vector<Tensor> encode(const MultiViewDataset& ds) const;
  /// z* (or the condition c under no-sgdf) for every sample, using the
  /// evaluation noise seed sgdf.seed and dataset row indices as sample ids.
  Tensor fused(const MultiViewDataset& ds) const;
  /// Unit-norm projection of the fused representation.
  Tensor projected(const MultiViewDataset& ds) const;
  /// The representation selected by eval.representation.
  Tensor representation(const MultiViewDataset& ds) const;

 private:
  std::vector<std::size_t> view_dims_;
  ModelConfig config_;
  std::vector<ViewAutoencoder> autoencoders_;
  Denoiser denoiser_;
  ProjectionHeads heads_;
  NoiseSchedule schedule_;
};

/// Loss terms of one mini-batch. `contrastive` is invalid when the phase or
/// ablation has no contrastive term.
struct BatchObjective {
  Var reconstruction;
  Var contrastive;
  Var total;
};

/// Builds the batch loss on `tape`: reconstruction error divided by the batch
/// size, plus (finetune, unless no-cl) the contrastive loss on the fused and
/// per-view projections. `sample_ids` key the fusion noise. When
/// `fixed_similarity` is given it replaces the similarity computed from the
/// batch (used for finite-difference checks, since the similarity carries no
/// gradient).
BatchObjective batch_objective(const Model& model, const Model::Bound& bound, std::span<const Var> views,
                               std::span<const std::uint64_t> sample_ids, Phase phase, std::uint64_t noise_seed,
                               const Tensor* fixed_similarity = nullptr);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamSlot {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;
};

/// One slot per parameter, created on first use.
struct AdamState {
  std::vector<AdamSlot> slots;
};

/// Adaptive-moment update with bias correction:
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
///   p -= lr (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
/// Throws ShapeError on mismatched shapes and NumericalError on a
/// non-finite gradient (nothing is modified in either case).
void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
                    const AdamConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  Phase phase = Phase::pretrain;
  double loss_rec = 0.0;
  double loss_cl = 0.0;
  double loss_total = 0.0;
  std::optional<double> acc;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch order of one epoch: a seeded shuffle of 0..n-1 split into
/// batches of `batch_size`. The last incomplete batch is kept; a trailing
/// batch of one sample is merged into the previous batch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

/// Progress across phases. Epoch numbers in the logs are global (finetune
/// continues where pretraining stopped).
struct TrainingState {
  std::size_t epochs_done = 0;
  std::vector<EpochLog> logs;
};

/// Reconstruction-only epochs; only autoencoder parameters change.
void pretrain(Model& model, const MultiViewDataset& ds, TrainingState& state, const EpochCallback& on_epoch = {});
/// Joint objective epochs. The optimizer state starts fresh.
void finetune(Model& model, const MultiViewDataset& ds, TrainingState& state, const EpochCallback& on_epoch = {});

/// Clustering accuracy of the model's representation, when labels exist.
std::optional<double> representation_accuracy(const Model& model, const MultiViewDataset& ds);

/// CSV with header epoch,phase,loss_rec,loss_cl,loss_total,acc.
std::string epoch_log_header();
std::string format_epoch_log_row(const EpochLog& row);
void write_epoch_log(const std::filesystem::path& path, std::span<const EpochLog> rows);

/// Binary checkpoint: config, view widths and every named parameter.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Throws IoError when unreadable and FormatError when corrupt.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace gdcn
