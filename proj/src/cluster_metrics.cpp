#include "gdcn/cluster_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "gdcn/errors.hpp"
#include "gdcn/rng.hpp"

namespace gdcn {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

// Returns true when any assignment changed; writes total inertia.
bool assign(const Tensor& points, const Tensor& centroids, std::vector<int>& assignments, double& inertia) {
  bool changed = false;
  inertia = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = squared_distance(points.row(i), centroids.row(0));
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
      const double d = squared_distance(points.row(i), centroids.row(c));
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    if (assignments[i] != best) {
      assignments[i] = best;
      changed = true;
    }
    inertia += best_d;
  }
  return changed;
}

void update_centroids(const Tensor& points, const std::vector<int>& assignments, Tensor& centroids) {
  Tensor sums(centroids.shape());
  std::vector<std::size_t> counts(centroids.rows(), 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto c = static_cast<std::size_t>(assignments[i]);
    ++counts[c];
    auto dst = sums.row(c);
    const auto src = points.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    if (counts[c] == 0) continue;  // empty cluster keeps its centroid
    const double inv = 1.0 / static_cast<double>(counts[c]);
    auto dst = centroids.row(c);
    const auto src = sums.row(c);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j] * inv;
  }
}

Tensor seed_centroids(const Tensor& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Tensor centroids = Tensor::matrix(k, points.cols());
  auto copy_row = [&](std::size_t c, std::size_t i) {
    std::copy(points.row(i).begin(), points.row(i).end(), centroids.row(c).begin());
  };
  copy_row(0, rng.below(n));
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points.row(i), centroids.row(c - 1)));
      total += nearest[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    copy_row(c, pick);
  }
  return centroids;
}

// Compact relabelling of arbitrary ids to 0..k-1 (sorted id order).
std::vector<std::size_t> compact(std::span<const int> labels, std::size_t& k) {
  std::map<int, std::size_t> ids;
  for (int l : labels) ids.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [id, index] : ids) index = next++;
  k = next;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = ids[labels[i]];
  return out;
}

struct Contingency {
  std::vector<std::vector<double>> counts;  // pred x truth
  std::size_t n = 0;
};

Contingency contingency(std::span<const int> pred, std::span<const int> truth, const char* metric) {
  if (pred.size() != truth.size())
    throw InvalidArgument(std::string(metric) + ": prediction has " + std::to_string(pred.size()) +
                          " labels, ground truth " + std::to_string(truth.size()));
  if (pred.empty()) throw InvalidArgument(std::string(metric) + ": empty labelling");
  std::size_t kp = 0;
  std::size_t kt = 0;
  const auto p = compact(pred, kp);
  const auto t = compact(truth, kt);
  Contingency c;
  c.n = pred.size();
  c.counts.assign(kp, std::vector<double>(kt, 0.0));
  for (std::size_t i = 0; i < p.size(); ++i) c.counts[p[i]][t[i]] += 1.0;
  return c;
}

double entropy(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  return h;
}

}  // namespace

ClusteringResult kmeans_single(const Tensor& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations,
                               std::vector<double>* inertia_trace) {
  if (points.rank() != 2) throw ShapeError("kmeans: points must be a matrix, got " + to_string(points.shape()));
  if (k == 0) throw InvalidArgument("kmeans: k must be at least 1");
  if (k > points.rows())
    throw InvalidArgument("kmeans: k=" + std::to_string(k) + " exceeds the " + std::to_string(points.rows()) + " points");
  Rng rng(seed);
  ClusteringResult r;
  r.centroids = seed_centroids(points, k, rng);
  r.assignments.assign(points.rows(), -1);
  if (inertia_trace) inertia_trace->clear();
  assign(points, r.centroids, r.assignments, r.inertia);
  if (inertia_trace) inertia_trace->push_back(r.inertia);
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    update_centroids(points, r.assignments, r.centroids);
    const bool changed = assign(points, r.centroids, r.assignments, r.inertia);
    if (inertia_trace) inertia_trace->push_back(r.inertia);
    if (!changed) break;
  }
  return r;
}

ClusteringResult kmeans(const Tensor& points, std::size_t k, const KMeansOptions& options) {
  const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
  ClusteringResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    ClusteringResult run = kmeans_single(points, k, combine_seed(options.seed, r), options.max_iterations);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

std::vector<std::size_t> max_weight_assignment(const std::vector<std::vector<double>>& weights) {
  const std::size_t n = weights.size();
  if (n == 0) return {};
  const std::size_t m = weights.front().size();
  if (m < n) throw InvalidArgument("max_weight_assignment: more rows than columns");
  double top = 0.0;
  for (const auto& row : weights) {
    if (row.size() != m) throw InvalidArgument("max_weight_assignment: ragged weight matrix");
    for (double w : row) top = std::max(top, w);
  }
  // Shortest augmenting path Hungarian algorithm on costs top - w, 1-based
  // potentials u (rows) and v (columns).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = (top - weights[i0 - 1][j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> result(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (match[j] != 0) result[match[j] - 1] = j - 1;
  return result;
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  const Contingency c = contingency(pred, truth, "accuracy");
  const std::size_t kp = c.counts.size();
  const std::size_t kt = c.counts.front().size();
  const std::size_t size = std::max(kp, kt);
  std::vector<std::vector<double>> square(size, std::vector<double>(size, 0.0));
  for (std::size_t i = 0; i < kp; ++i)
    for (std::size_t j = 0; j < kt; ++j) square[i][j] = c.counts[i][j];
  const auto match = max_weight_assignment(square);
  double hits = 0.0;
  for (std::size_t i = 0; i < size; ++i) hits += square[i][match[i]];
  return hits / static_cast<double>(c.n);
}

double nmi(std::span<const int> pred, std::span<const int> truth) {
  const Contingency c = contingency(pred, truth, "nmi");
  const double n = static_cast<double>(c.n);
  const std::size_t kp = c.counts.size();
  const std::size_t kt = c.counts.front().size();
  if (kp == 1 && kt == 1) return 1.0;
  if (kp == 1 || kt == 1) return 0.0;
  std::vector<double> rows(kp, 0.0), cols(kt, 0.0);
  for (std::size_t i = 0; i < kp; ++i)
    for (std::size_t j = 0; j < kt; ++j) {
      rows[i] += c.counts[i][j];
      cols[j] += c.counts[i][j];
    }
  double mi = 0.0;
  for (std::size_t i = 0; i < kp; ++i)
    for (std::size_t j = 0; j < kt; ++j) {
      const double nij = c.counts[i][j];
      if (nij > 0.0) mi += (nij / n) * std::log(n * nij / (rows[i] * cols[j]));
    }
  const double denom = 0.5 * (entropy(rows, n) + entropy(cols, n));
  return std::clamp(mi / denom, 0.0, 1.0);
}

double purity(std::span<const int> pred, std::span<const int> truth) {
  const Contingency c = contingency(pred, truth, "purity");
  double total = 0.0;
  for (const auto& row : c.counts) total += *std::max_element(row.begin(), row.end());
  return total / static_cast<double>(c.n);
}

MetricsReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth) {
  return {accuracy(pred, truth), nmi(pred, truth), purity(pred, truth)};
}

std::string to_json(const MetricsReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "{\"acc\": %.6f, \"nmi\": %.6f, \"pur\": %.6f}", report.acc, report.nmi, report.pur);
  return buf;
}

}  // namespace gdcn
