// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Row-major single-precision GEMM loops, all accumulating into C.

#pragma once

#include <cstdint>
#include <vector>

namespace serpent::detail {

// C[m,n] += A[m,k] · B[k,n]
inline void gemm_nn(int64_t m, int64_t k, int64_t n, const float* a,
                    const float* b, float* c) {
  for (int64_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    const float* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A[m,n] · B[k,n]^T
// B is transposed once so the inner loop runs over contiguous rows.
inline void gemm_nt(int64_t m, int64_t n, int64_t k, const float* a,
                    const float* b, float* c) {
  std::vector<float> bt(static_cast<size_t>(n * k));
  for (int64_t p = 0; p < k; ++p)
    for (int64_t j = 0; j < n; ++j) bt[static_cast<size_t>(j * k + p)] = b[p * n + j];
  gemm_nn(m, n, k, a, bt.data(), c);
}

// C[k,n] += A[m,k]^T · B[m,n]
inline void gemm_tn(int64_t m, int64_t k, int64_t n, const float* a,
                    const float* b, float* c) {
  for (int64_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    const float* brow = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      float* crow = c + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace serpent::detail
