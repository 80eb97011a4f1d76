#pragma once

#include <cblas.h>

#include <algorithm>
#include <cstdlib>
#include <string>

namespace ftfd::blas {

// Row-major C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace ftfd::blas

extern "C" void openblas_set_num_threads(int);

namespace ftfd {

/// Applies the FTFD_THREADS worker cap (default: let the BLAS pick the host
/// core count). Returns the cap in effect, 0 meaning "unset".
inline int apply_thread_cap() {
  const char* env = std::getenv("FTFD_THREADS");
  if (!env || !*env) return 0;
  const int n = std::max(1, std::atoi(env));
  openblas_set_num_threads(n);
  return n;
}

}  // namespace ftfd
