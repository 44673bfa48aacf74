#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gdcn/rng.hpp"
#include "gdcn/tensor.hpp"

namespace gdcn::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Central differences of a scalar function of several tensors, computed
/// without the tape.
inline std::vector<Tensor> numeric_gradients(const std::function<double(std::vector<Tensor>&)>& f,
                                             std::vector<Tensor> params, double step) {
  std::vector<Tensor> grads;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor g(params[p].shape());
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + step;
      const double up = f(params);
      params[p][i] = saved - step;
      const double down = f(params);
      params[p][i] = saved;
      g[i] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double max_relative_error(const Tensor& analytic, const Tensor& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(analytic[i])));
  return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gdcn_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace gdcn::test
