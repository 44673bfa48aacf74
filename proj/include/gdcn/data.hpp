#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gdcn/tensor.hpp"

namespace gdcn {

/// N samples observed through M views. View m is an N x D_m matrix; labels,
/// when present, are cluster ids in [0, n_clusters).
struct MultiViewDataset {
  std::string name;
  std::size_t n_samples = 0;
  std::size_t n_clusters = 0;
  std::vector<std::size_t> view_dims;
  std::vector<Tensor> views;
  std::optional<std::vector<int>> labels;

  std::size_t n_views() const noexcept { return views.size(); }

  /// Throws InvalidArgument on any broken invariant (shapes, label range,
  /// non-finite values).
  void validate() const;
};

/// Reads `manifest.json`, `view_<m>.csv` and optional `labels.csv` from a
/// directory, validates them and min-max normalizes every column to [0, 1]
/// (constant columns become 0).
///
/// Errors: IoError for missing/unreadable files, FormatError (file and line)
/// for malformed content, row-count mismatches and out-of-range labels.
MultiViewDataset load_dataset(const std::filesystem::path& dir);

/// Writes the directory layout read by load_dataset. Values are printed with
/// 17 significant digits so they reload exactly.
void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir);

/// Column-wise min-max scaling to [0, 1]; constant columns map to 0.
void normalize_columns(Tensor& view);

struct SyntheticSpec {
  std::size_t n_clusters = 3;
  std::size_t per_cluster = 200;
  std::vector<std::size_t> view_dims{3, 3, 3};
  double separation = 6.0;
  std::uint64_t seed = 0;
};

/// Gaussian blobs that share cluster identity across views. Each view maps
/// the one-hot cluster code through its own random matrix of unit-norm
/// columns, scaled by `separation`, and adds unit Gaussian noise. Samples are
/// ordered cluster by cluster.
MultiViewDataset generate_synthetic(const SyntheticSpec& spec);

/// Corruption applied per (sample, view) cell: a cell is one sample's full
/// feature row in one view.
struct CorruptionSpec {
  double noise_sigma = 0.0;
  double noise_fraction = 0.0;
  double missing_fraction = 0.0;
  std::uint64_t seed = 0;
  /// Views eligible for corruption; empty means all views.
  std::vector<std::size_t> views;

  void validate() const;
};

/// Returns a corrupted copy. Exactly floor(noise_fraction * cells) cells get
/// additive N(0, sigma^2) noise and floor(missing_fraction * cells) cells are
/// zeroed (masking is applied after noise). Labels are copied unchanged.
MultiViewDataset corrupt(const MultiViewDataset& ds, const CorruptionSpec& spec);

}  // namespace gdcn
