#include "gdcn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "gdcn/errors.hpp"
#include "gdcn/rng.hpp"
#include "json.hpp"

namespace gdcn {

namespace fs = std::filesystem;

namespace {

std::string view_file(std::size_t m) { return "view_" + std::to_string(m) + ".csv"; }

std::ifstream open_input(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file " + path.string());
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

// Parses `expected_rows` lines of `expected_cols` comma-separated numbers.
Tensor read_matrix(const fs::path& path, std::size_t expected_rows, std::size_t expected_cols) {
  std::ifstream in = open_input(path);
  const std::string file = path.filename().string();
  Tensor out = Tensor::matrix(expected_rows, expected_cols);
  std::string line;
  std::size_t row = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    if (row == expected_rows)
      throw FormatError(file, line_no, "more than the declared " + std::to_string(expected_rows) + " rows");
    std::size_t col = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      while (p < end && *p == ' ') ++p;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || next == p)
        throw FormatError(file, line_no, "non-numeric cell in column " + std::to_string(col + 1));
      if (!std::isfinite(v)) throw FormatError(file, line_no, "non-finite value in column " + std::to_string(col + 1));
      if (col == expected_cols)
        throw FormatError(file, line_no, "expected " + std::to_string(expected_cols) + " columns");
      out(row, col++) = v;
      p = next;
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      if (*p != ',') throw FormatError(file, line_no, "non-numeric cell in column " + std::to_string(col + 1));
      ++p;
    }
    if (col != expected_cols)
      throw FormatError(file, line_no,
                        "expected " + std::to_string(expected_cols) + " columns, got " + std::to_string(col));
    ++row;
  }
  if (row != expected_rows)
    throw FormatError(file, line_no,
                      "row count " + std::to_string(row) + " does not match n_samples " + std::to_string(expected_rows));
  return out;
}

std::vector<int> read_labels(const fs::path& path, std::size_t expected_rows, std::size_t n_clusters) {
  std::ifstream in = open_input(path);
  const std::string file = path.filename().string();
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    long long v = 0;
    const char* begin = line.data();
    const char* end = line.data() + line.size();
    while (begin < end && *begin == ' ') ++begin;
    while (end > begin && end[-1] == ' ') --end;
    auto [next, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || next != end) throw FormatError(file, line_no, "label is not an integer");
    if (v < 0 || static_cast<std::size_t>(v) >= n_clusters)
      throw FormatError(file, line_no, "label " + std::to_string(v) + " outside [0, " + std::to_string(n_clusters) + ")");
    labels.push_back(static_cast<int>(v));
  }
  if (labels.size() != expected_rows)
    throw FormatError(file, line_no,
                      "row count " + std::to_string(labels.size()) + " does not match n_samples " +
                          std::to_string(expected_rows));
  return labels;
}

template <class T>
T manifest_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw FormatError("manifest.json", 0, std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError("manifest.json", 0, std::string("key '") + key + "' has the wrong type");
  }
}

std::size_t manifest_count(const nlohmann::json& j, const char* key) {
  const auto& v = j.contains(key) ? j.at(key) : nlohmann::json();
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw FormatError("manifest.json", 0, std::string("key '") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

void MultiViewDataset::validate() const {
  if (views.size() != view_dims.size())
    throw InvalidArgument("dataset: " + std::to_string(views.size()) + " views but " +
                          std::to_string(view_dims.size()) + " view dims");
  for (std::size_t m = 0; m < views.size(); ++m) {
    const Tensor& v = views[m];
    if (v.rank() != 2 || v.rows() != n_samples || v.cols() != view_dims[m])
      throw InvalidArgument("dataset: view " + std::to_string(m) + " has shape " + to_string(v.shape()) +
                            ", expected [" + std::to_string(n_samples) + "," + std::to_string(view_dims[m]) + "]");
    if (!v.all_finite()) throw InvalidArgument("dataset: view " + std::to_string(m) + " has non-finite values");
  }
  if (labels) {
    if (labels->size() != n_samples) throw InvalidArgument("dataset: label count does not match n_samples");
    for (int l : *labels)
      if (l < 0 || static_cast<std::size_t>(l) >= n_clusters)
        throw InvalidArgument("dataset: label " + std::to_string(l) + " outside [0, n_clusters)");
  }
}

void normalize_columns(Tensor& view) {
  for (std::size_t c = 0; c < view.cols(); ++c) {
    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t r = 0; r < view.rows(); ++r) {
      lo = std::min(lo, view(r, c));
      hi = std::max(hi, view(r, c));
    }
    const double range = hi - lo;
    for (std::size_t r = 0; r < view.rows(); ++r) view(r, c) = range > 0.0 ? (view(r, c) - lo) / range : 0.0;
  }
}

MultiViewDataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  nlohmann::json manifest;
  {
    std::ifstream in = open_input(dir / "manifest.json");
    try {
      in >> manifest;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest.json", 0, std::string("invalid JSON: ") + e.what());
    }
  }
  if (!manifest.is_object()) throw FormatError("manifest.json", 0, "top level must be an object");

  MultiViewDataset ds;
  ds.name = manifest_field<std::string>(manifest, "name");
  ds.n_samples = manifest_count(manifest, "n_samples");
  const std::size_t n_views = manifest_count(manifest, "n_views");
  ds.n_clusters = manifest_count(manifest, "n_clusters");
  ds.view_dims = manifest_field<std::vector<std::size_t>>(manifest, "view_dims");
  const bool has_labels = manifest_field<bool>(manifest, "has_labels");
  if (ds.view_dims.size() != n_views)
    throw FormatError("manifest.json", 0, "view_dims has " + std::to_string(ds.view_dims.size()) +
                                              " entries but n_views is " + std::to_string(n_views));
  if (ds.n_samples == 0 || n_views == 0) throw FormatError("manifest.json", 0, "n_samples and n_views must be positive");
  for (std::size_t d : ds.view_dims)
    if (d == 0) throw FormatError("manifest.json", 0, "view dimensions must be positive");

  for (std::size_t m = 0; m < n_views; ++m) {
    Tensor view = read_matrix(dir / view_file(m), ds.n_samples, ds.view_dims[m]);
    normalize_columns(view);
    ds.views.push_back(std::move(view));
  }
  if (has_labels) {
    if (ds.n_clusters == 0) throw FormatError("manifest.json", 0, "n_clusters must be positive when labels exist");
    ds.labels = read_labels(dir / "labels.csv", ds.n_samples, ds.n_clusters);
  }
  ds.validate();
  return ds;
}

void save_dataset(const MultiViewDataset& ds, const fs::path& dir) {
  ds.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json manifest;
  manifest["name"] = ds.name;
  manifest["n_samples"] = ds.n_samples;
  manifest["n_views"] = ds.n_views();
  manifest["n_clusters"] = ds.n_clusters;
  manifest["view_dims"] = ds.view_dims;
  manifest["has_labels"] = ds.labels.has_value();
  {
    std::ofstream out = open_output(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
  char buf[32];
  for (std::size_t m = 0; m < ds.n_views(); ++m) {
    std::ofstream out = open_output(dir / view_file(m));
    const Tensor& v = ds.views[m];
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", v(r, c));
        if (c) out << ',';
        out << buf;
      }
      out << '\n';
    }
    if (!out) throw IoError("write failed for " + (dir / view_file(m)).string());
  }
  if (ds.labels) {
    std::ofstream out = open_output(dir / "labels.csv");
    for (int l : *ds.labels) out << l << '\n';
    if (!out) throw IoError("write failed for " + (dir / "labels.csv").string());
  }
}

MultiViewDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_clusters == 0 || spec.per_cluster == 0 || spec.view_dims.empty())
    throw InvalidArgument("generate_synthetic: counts must be at least 1");
  for (std::size_t d : spec.view_dims)
    if (d == 0) throw InvalidArgument("generate_synthetic: view dimensions must be at least 1");
  if (!(spec.separation > 0.0)) throw InvalidArgument("generate_synthetic: separation must be positive");

  const std::size_t k = spec.n_clusters;
  const std::size_t n = k * spec.per_cluster;
  MultiViewDataset ds;
  ds.name = "synthetic";
  ds.n_samples = n;
  ds.n_clusters = k;
  ds.view_dims = spec.view_dims;

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / spec.per_cluster);
  ds.labels = std::move(labels);

  for (std::size_t m = 0; m < spec.view_dims.size(); ++m) {
    const std::size_t d = spec.view_dims[m];
    // Cluster centers are the unit-norm columns of a random map; redraw a few
    // times to avoid nearly coincident centers.
    Rng map_rng(spec.seed, 1, m);
    Tensor centers;
    double best_gap = -1.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      Tensor candidate = Tensor::matrix(k, d);
      for (std::size_t c = 0; c < k; ++c) {
        double norm = 0.0;
        for (double& v : candidate.row(c)) {
          v = map_rng.normal();
          norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : candidate.row(c)) v /= norm;
      }
      double gap = INFINITY;
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
          double dist = 0.0;
          for (std::size_t j = 0; j < d; ++j) dist += std::pow(candidate(a, j) - candidate(b, j), 2);
          gap = std::min(gap, std::sqrt(dist));
        }
      if (gap > best_gap) {
        best_gap = gap;
        centers = std::move(candidate);
      }
      if (best_gap >= 1.0) break;
    }

    Rng noise_rng(spec.seed, 2, m);
    Tensor view = Tensor::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i / spec.per_cluster;
      for (std::size_t j = 0; j < d; ++j) view(i, j) = spec.separation * centers(c, j) + noise_rng.normal();
    }
    ds.views.push_back(std::move(view));
  }
  return ds;
}

void CorruptionSpec::validate() const {
  auto fraction_ok = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!fraction_ok(noise_fraction)) throw InvalidArgument("corruption: noise_fraction must lie in [0, 1]");
  if (!fraction_ok(missing_fraction)) throw InvalidArgument("corruption: missing_fraction must lie in [0, 1]");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("corruption: noise_sigma must be non-negative");
}

MultiViewDataset corrupt(const MultiViewDataset& ds, const CorruptionSpec& spec) {
  spec.validate();
  std::vector<std::size_t> views = spec.views;
  if (views.empty()) {
    views.resize(ds.n_views());
    std::iota(views.begin(), views.end(), 0);
  }
  for (std::size_t m : views)
    if (m >= ds.n_views()) throw InvalidArgument("corruption: view " + std::to_string(m) + " out of range");

  MultiViewDataset out = ds;
  const std::size_t cells = ds.n_samples * views.size();
  // Cell c covers sample c % N of view views[c / N].
  auto pick = [&](double fraction, std::uint64_t stream) {
    std::vector<std::size_t> order(cells);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(spec.seed, stream);
    for (std::size_t i = cells; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    order.resize(static_cast<std::size_t>(std::floor(fraction * static_cast<double>(cells))));
    std::sort(order.begin(), order.end());
    return order;
  };

  if (spec.noise_sigma > 0.0) {
    Rng noise(spec.seed, 11);
    for (std::size_t c : pick(spec.noise_fraction, 10)) {
      auto row = out.views[views[c / ds.n_samples]].row(c % ds.n_samples);
      for (double& v : row) v += spec.noise_sigma * noise.normal();
    }
  }
  for (std::size_t c : pick(spec.missing_fraction, 20)) {
    auto row = out.views[views[c / ds.n_samples]].row(c % ds.n_samples);
    std::fill(row.begin(), row.end(), 0.0);
  }
  return out;
}

}  // namespace gdcn
