#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdcn/tensor.hpp"

namespace gdcn {

struct ClusteringResult {
  std::vector<int> assignments;
  Tensor centroids;  // k x d
  double inertia = 0.0;
  std::size_t iterations = 0;
};

struct KMeansOptions {
  std::size_t restarts = 10;
  std::size_t max_iterations = 300;
  std::uint64_t seed = 0;
};

/// Best-inertia result over `restarts` runs of k-means++ seeding followed by
/// Lloyd iterations (to a fixed point or `max_iterations`). Ties in the
/// nearest-centroid search go to the lowest centroid index. Throws
/// InvalidArgument when k is 0 or exceeds the number of points.
ClusteringResult kmeans(const Tensor& points, std::size_t k, const KMeansOptions& options = {});

/// A single seeded run. When `inertia_trace` is given it receives the
/// inertia after every assignment step.
ClusteringResult kmeans_single(const Tensor& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations,
                               std::vector<double>* inertia_trace = nullptr);

/// Maximum-weight perfect matching of rows to columns (rows <= cols) by the
/// Hungarian method; returns the matched column of each row.
std::vector<std::size_t> max_weight_assignment(const std::vector<std::vector<double>>& weights);

/// Fraction of samples correctly labelled under the best one-to-one mapping
/// of predicted clusters to classes.
double accuracy(std::span<const int> pred, std::span<const int> truth);

/// Mutual information normalized by the arithmetic mean of the two entropies.
/// 1 when both partitions are a single cluster, 0 when exactly one is.
double nmi(std::span<const int> pred, std::span<const int> truth);

/// (1/N) sum over predicted clusters of the largest class overlap.
double purity(std::span<const int> pred, std::span<const int> truth);

struct MetricsReport {
  double acc = 0.0;
  double nmi = 0.0;
  double pur = 0.0;
};

MetricsReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth);

/// {"acc": 0.123456, "nmi": ..., "pur": ...} with six decimals.
std::string to_json(const MetricsReport& report);

}  // namespace gdcn
