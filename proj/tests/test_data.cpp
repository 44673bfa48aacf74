#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "gdcn/cluster_metrics.hpp"
#include "gdcn/data.hpp"
#include "gdcn/errors.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace gdcn;
namespace fs = std::filesystem;

namespace {

void write_manifest(const fs::path& dir, std::size_t n, std::vector<std::size_t> dims, std::size_t k,
                    bool labels) {
  nlohmann::json m;
  m["name"] = "fixture";
  m["n_samples"] = n;
  m["n_views"] = dims.size();
  m["n_clusters"] = k;
  m["view_dims"] = dims;
  m["has_labels"] = labels;
  std::ofstream(dir / "manifest.json") << m.dump();
}

void write_view(const fs::path& file, std::size_t rows, std::size_t cols, Rng& rng) {
  std::ofstream out(file);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << rng.uniform(-5, 5);
    out << '\n';
  }
}

void write_labels(const fs::path& file, std::size_t rows, std::size_t k) {
  std::ofstream out(file);
  for (std::size_t r = 0; r < rows; ++r) out << r % k << '\n';
}

// Manifest plus files for a benchmark-like shape.
void write_fixture(const fs::path& dir, std::size_t n, const std::vector<std::size_t>& dims, std::size_t k) {
  Rng rng(17);
  write_manifest(dir, n, dims, k, true);
  for (std::size_t m = 0; m < dims.size(); ++m) write_view(dir / ("view_" + std::to_string(m) + ".csv"), n, dims[m], rng);
  write_labels(dir / "labels.csv", n, k);
}

}  // namespace

TEST(LoadDataset, NgsShape) {
  test::TempDir dir("ngs");
  write_fixture(dir.path(), 500, {2000, 2000, 2000}, 5);
  const MultiViewDataset ds = load_dataset(dir.path());
  EXPECT_EQ(ds.n_samples, 500u);
  EXPECT_EQ(ds.n_views(), 3u);
  EXPECT_EQ(ds.n_clusters, 5u);
  EXPECT_EQ(ds.view_dims, (std::vector<std::size_t>{2000, 2000, 2000}));
  EXPECT_EQ(ds.views[2].shape(), (Shape{500, 2000}));
}

TEST(LoadDataset, Synthetic3dShapeAndNormalization) {
  test::TempDir dir("s3d");
  write_fixture(dir.path(), 600, {3, 3, 3}, 3);
  const MultiViewDataset ds = load_dataset(dir.path());
  EXPECT_EQ(ds.n_samples, 600u);
  ASSERT_TRUE(ds.labels.has_value());
  for (const Tensor& v : ds.views) {
    for (std::size_t c = 0; c < v.cols(); ++c) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t r = 0; r < v.rows(); ++r) {
        lo = std::min(lo, v(r, c));
        hi = std::max(hi, v(r, c));
      }
      EXPECT_EQ(lo, 0.0);
      EXPECT_EQ(hi, 1.0);
    }
  }
}

TEST(LoadDataset, RowCountMismatchNamesFileAndLine) {
  test::TempDir dir("rows");
  write_fixture(dir.path(), 500, {4, 4, 4}, 5);
  Rng rng(1);
  write_view(dir.path() / "view_1.csv", 499, 4, rng);
  try {
    (void)load_dataset(dir.path());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.file(), "view_1.csv");
    EXPECT_NE(std::string(e.what()).find("499"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, NonNumericCellReportsLine) {
  test::TempDir dir("nonnum");
  write_fixture(dir.path(), 5, {2}, 1);
  std::ofstream(dir.path() / "view_0.csv") << "1,2\n3,4\n5,abc\n7,8\n9,10\n";
  try {
    (void)load_dataset(dir.path());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.file(), "view_0.csv");
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadDataset, LabelOutOfRange) {
  test::TempDir dir("label");
  write_fixture(dir.path(), 4, {2}, 2);
  std::ofstream(dir.path() / "labels.csv") << "0\n1\n2\n0\n";
  try {
    (void)load_dataset(dir.path());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.file(), "labels.csv");
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadDataset, MissingFilesAreIoErrors) {
  test::TempDir dir("missing");
  EXPECT_THROW((void)load_dataset(dir.path() / "nope"), IoError);
  EXPECT_THROW((void)load_dataset(dir.path()), IoError);
  write_manifest(dir.path(), 3, {2, 2}, 1, false);
  Rng rng(2);
  write_view(dir.path() / "view_0.csv", 3, 2, rng);
  EXPECT_THROW((void)load_dataset(dir.path()), IoError);
}

TEST(LoadDataset, RejectsInconsistentManifest) {
  test::TempDir dir("manifest");
  write_manifest(dir.path(), 3, {2, 2}, 1, false);
  nlohmann::json m = nlohmann::json::parse(std::ifstream(dir.path() / "manifest.json"));
  m["n_views"] = 3;
  std::ofstream(dir.path() / "manifest.json") << m.dump();
  EXPECT_THROW((void)load_dataset(dir.path()), FormatError);
  std::ofstream(dir.path() / "manifest.json") << "{not json";
  EXPECT_THROW((void)load_dataset(dir.path()), FormatError);
}

TEST(SaveDataset, RoundTripsExactly) {
  SyntheticSpec spec;
  spec.per_cluster = 20;
  spec.view_dims = {3, 5};
  MultiViewDataset ds = generate_synthetic(spec);
  for (Tensor& v : ds.views) normalize_columns(v);
  test::TempDir dir("roundtrip");
  save_dataset(ds, dir.path());
  const MultiViewDataset back = load_dataset(dir.path());
  ASSERT_EQ(back.n_views(), ds.n_views());
  for (std::size_t m = 0; m < ds.n_views(); ++m) EXPECT_LE(test::max_abs_diff(back.views[m], ds.views[m]), 1e-12);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(NormalizeColumns, ConstantColumnsBecomeZero) {
  Tensor v = Tensor::from_rows({{1, 5, -2}, {3, 5, 2}, {2, 5, 0}});
  normalize_columns(v);
  EXPECT_EQ(v, Tensor::from_rows({{0, 0, 0}, {1, 0, 1}, {0.5, 0, 0.5}}));
}

TEST(GenerateSynthetic, SingleViewKMeansAlreadySeparates) {
  SyntheticSpec spec;
  spec.seed = 1;
  const MultiViewDataset ds = generate_synthetic(spec);
  EXPECT_EQ(ds.n_samples, 600u);
  EXPECT_EQ(ds.n_views(), 3u);
  for (std::size_t m = 0; m < 3; ++m) {
    const ClusteringResult r = kmeans(ds.views[m], 3, {10, 300, 0});
    EXPECT_GT(accuracy(r.assignments, *ds.labels), 0.9) << "view " << m;
  }
}

TEST(GenerateSynthetic, SingleClusterAllLabelsZero) {
  SyntheticSpec spec;
  spec.n_clusters = 1;
  spec.per_cluster = 50;
  const MultiViewDataset ds = generate_synthetic(spec);
  EXPECT_EQ(ds.n_samples, 50u);
  for (int l : *ds.labels) EXPECT_EQ(l, 0);
}

TEST(GenerateSynthetic, DeterministicForSeedAndSensitiveToIt) {
  SyntheticSpec spec;
  spec.seed = 9;
  const MultiViewDataset a = generate_synthetic(spec);
  const MultiViewDataset b = generate_synthetic(spec);
  for (std::size_t m = 0; m < a.n_views(); ++m) EXPECT_EQ(a.views[m], b.views[m]);
  spec.seed = 10;
  EXPECT_NE(generate_synthetic(spec).views[0], a.views[0]);
}

TEST(GenerateSynthetic, RejectsBadSpecs) {
  SyntheticSpec spec;
  spec.n_clusters = 0;
  EXPECT_THROW((void)generate_synthetic(spec), InvalidArgument);
  spec = {};
  spec.separation = 0.0;
  EXPECT_THROW((void)generate_synthetic(spec), InvalidArgument);
}

TEST(Corrupt, ZeroSpecIsIdentity) {
  const MultiViewDataset ds = generate_synthetic({});
  const MultiViewDataset out = corrupt(ds, {});
  for (std::size_t m = 0; m < ds.n_views(); ++m) EXPECT_EQ(out.views[m], ds.views[m]);
}

TEST(Corrupt, FullMaskOnOneViewZeroesIt) {
  const MultiViewDataset ds = generate_synthetic({});
  CorruptionSpec spec;
  spec.missing_fraction = 1.0;
  spec.views = {1};
  const MultiViewDataset out = corrupt(ds, spec);
  EXPECT_EQ(out.views[1], Tensor::matrix(ds.n_samples, ds.view_dims[1]));
  EXPECT_EQ(out.views[0], ds.views[0]);
  EXPECT_EQ(out.views[2], ds.views[2]);
}

TEST(Corrupt, NoiseTouchesExactlyTheRequestedCells) {
  const MultiViewDataset ds = generate_synthetic({});
  CorruptionSpec spec;
  spec.noise_fraction = 0.3;
  spec.noise_sigma = 1.0;
  spec.seed = 4;
  const MultiViewDataset out = corrupt(ds, spec);
  std::size_t differing = 0;
  for (std::size_t m = 0; m < ds.n_views(); ++m)
    for (std::size_t i = 0; i < ds.n_samples; ++i) {
      bool differs = false;
      for (std::size_t j = 0; j < ds.view_dims[m]; ++j) differs |= out.views[m](i, j) != ds.views[m](i, j);
      differing += differs;
    }
  EXPECT_EQ(differing, static_cast<std::size_t>(std::floor(0.3 * 600 * 3)));
  EXPECT_EQ(out.labels, ds.labels);
}

TEST(Corrupt, PureFunctionOfSeedAndInputUntouched) {
  const MultiViewDataset ds = generate_synthetic({});
  const Tensor before = ds.views[0];
  CorruptionSpec spec;
  spec.noise_fraction = 0.5;
  spec.noise_sigma = 2.0;
  spec.missing_fraction = 0.2;
  spec.seed = 12;
  const MultiViewDataset a = corrupt(ds, spec);
  const MultiViewDataset b = corrupt(ds, spec);
  for (std::size_t m = 0; m < ds.n_views(); ++m) EXPECT_EQ(a.views[m], b.views[m]);
  EXPECT_EQ(ds.views[0], before);
}

TEST(Corrupt, ValidatesSpec) {
  const MultiViewDataset ds = generate_synthetic({});
  CorruptionSpec spec;
  spec.noise_fraction = 1.5;
  EXPECT_THROW((void)corrupt(ds, spec), InvalidArgument);
  spec = {};
  spec.noise_sigma = -1.0;
  EXPECT_THROW((void)corrupt(ds, spec), InvalidArgument);
  spec = {};
  spec.views = {7};
  EXPECT_THROW((void)corrupt(ds, spec), InvalidArgument);
}
