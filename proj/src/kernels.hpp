#pragma once

// Dense kernels used by the tape. Every output element accumulates its
// products in ascending inner-index order through the same arithmetic
// (no contraction, see the top-level CMakeLists), so a row's result does not
// depend on which other rows share the call.

#include <cstddef>
#include <vector>

namespace gdcn::kernels {

namespace detail {

template <int R>
inline void axpy_rows(const double* const* a_rows, std::size_t a_step, std::size_t p,
                      const double* __restrict b, double* const* c_rows, std::size_t m) {
  double x[R];
  for (int r = 0; r < R; ++r) x[r] = a_rows[r][p * a_step];
  for (std::size_t j = 0; j < m; ++j) {
    const double bj = b[j];
    for (int r = 0; r < R; ++r) c_rows[r][j] += x[r] * bj;
  }
}

}  // namespace detail

/// C (n x m) += A (n x k) * B (k x m); all row-major with the given leading
/// dimensions.
inline void gemm_nn(std::size_t n, std::size_t k, std::size_t m, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double* ar[4] = {a + i * lda, a + (i + 1) * lda, a + (i + 2) * lda, a + (i + 3) * lda};
    double* cr[4] = {c + i * ldc, c + (i + 1) * ldc, c + (i + 2) * ldc, c + (i + 3) * ldc};
    for (std::size_t p = 0; p < k; ++p) detail::axpy_rows<4>(ar, 1, p, b + p * ldb, cr, m);
  }
  for (; i < n; ++i) {
    const double* ar[1] = {a + i * lda};
    double* cr[1] = {c + i * ldc};
    for (std::size_t p = 0; p < k; ++p) detail::axpy_rows<1>(ar, 1, p, b + p * ldb, cr, m);
  }
}

/// C (k x m) += A^T * B with A (n x k) and B (n x m).
inline void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::size_t q = 0;
  for (; q + 4 <= k; q += 4) {
    const double* ar[4] = {a + q, a + q + 1, a + q + 2, a + q + 3};
    double* cr[4] = {c + q * ldc, c + (q + 1) * ldc, c + (q + 2) * ldc, c + (q + 3) * ldc};
    for (std::size_t i = 0; i < n; ++i) detail::axpy_rows<4>(ar, lda, i, b + i * ldb, cr, m);
  }
  for (; q < k; ++q) {
    const double* ar[1] = {a + q};
    double* cr[1] = {c + q * ldc};
    for (std::size_t i = 0; i < n; ++i) detail::axpy_rows<1>(ar, lda, i, b + i * ldb, cr, m);
  }
}

/// C (n x k) += A (n x m) * B^T with B (k x m).
inline void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::vector<double> bt(m * k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t j = 0; j < m; ++j) bt[j * k + r] = b[r * ldb + j];
  gemm_nn(n, m, k, a, lda, bt.data(), k, c, ldc);
}

}  // namespace gdcn::kernels
