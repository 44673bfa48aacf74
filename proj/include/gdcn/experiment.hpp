#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gdcn/cluster_metrics.hpp"
#include "gdcn/trainer.hpp"

namespace gdcn {

struct Evaluation {
  ClusteringResult clustering;
  /// Present when the dataset has labels.
  std::optional<MetricsReport> metrics;
};

/// K-Means (n_clusters, eval.kmeans_restarts, seeded by the model seed) on
/// the representation selected by the config.
Evaluation evaluate(const Model& model, const MultiViewDataset& ds);

struct RunResult {
  TrainingState training;
  Evaluation evaluation;
};

/// Pretrain, finetune, evaluate. With a non-empty `out_dir` the directory
/// receives config.json (effective config and dataset summary),
/// epoch_log.csv (streamed row by row), pretrain.ckpt, final.ckpt and, when
/// labels exist, metrics.json.
RunResult run_experiment(Model& model, const MultiViewDataset& ds, const std::filesystem::path& out_dir = {},
                         const EpochCallback& on_epoch = {});

/// The JSON echoed to config.json.
nlohmann::ordered_json experiment_metadata(const Model& model, const MultiViewDataset& ds);

enum class EmbeddingKind { fused, projected, per_view };

/// Accepts "fused", "projected" and "per-view".
EmbeddingKind parse_embedding_kind(const std::string& text);
std::string to_string(EmbeddingKind kind);

/// Writes fused.csv, projected.csv or view_<m>.csv (one per view) into
/// `out_dir` and returns the paths. Each file has a header row
/// (e0,...,e{d-1}[,label]) and one row per sample; values use 17 significant
/// digits. Throws ShapeError when the dataset does not match the model.
std::vector<std::filesystem::path> export_embeddings(const Model& model, const MultiViewDataset& ds,
                                                     EmbeddingKind kind, const std::filesystem::path& out_dir);

struct EmbeddingTable {
  Tensor values;
  std::optional<std::vector<int>> labels;
};

/// Reads a file written by export_embeddings.
EmbeddingTable read_embeddings(const std::filesystem::path& path);

}  // namespace gdcn
