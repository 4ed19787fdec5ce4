/* Copyright 2026 The modfuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "modfuse/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace modfuse::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr long kParallelWork = 1L << 15;

template <typename T>
inline T at(Trans t, const T* x, int ld, int r, int c) {
  return t == Trans::kNo ? x[static_cast<std::ptrdiff_t>(r) * ld + c]
                         : x[static_cast<std::ptrdiff_t>(c) * ld + r];
}

template <typename T>
inline void scale_row(T* crow, int n, T beta) {
  if (beta == T(0)) {
    std::fill(crow, crow + n, T(0));
  } else if (beta != T(1)) {
    for (int j = 0; j < n; ++j) crow[j] *= beta;
  }
}

// Register-blocked micro-kernel over packed panels: A is packed as
// MR-row strips (k x MR), B as NR-column strips (k x NR), both zero padded.
constexpr int kMR = 4;
constexpr int kNR = 16;

template <typename T>
void pack_b(Trans tb, int n, int k, const T* b, int ldb, T* out) {
  const int panels = (n + kNR - 1) / kNR;
  for (int jp = 0; jp < panels; ++jp) {
    T* dst = out + static_cast<std::ptrdiff_t>(jp) * k * kNR;
    const int j0 = jp * kNR;
    const int nb = std::min(kNR, n - j0);
    for (int p = 0; p < k; ++p) {
      T* row = dst + static_cast<std::ptrdiff_t>(p) * kNR;
      for (int j = 0; j < nb; ++j) row[j] = at(tb, b, ldb, p, j0 + j);
      for (int j = nb; j < kNR; ++j) row[j] = T(0);
    }
  }
}

template <typename T>
void pack_a(Trans ta, int i0, int mb, int k, const T* a, int lda, T* out) {
  for (int p = 0; p < k; ++p) {
    T* col = out + static_cast<std::ptrdiff_t>(p) * kMR;
    for (int r = 0; r < mb; ++r) col[r] = at(ta, a, lda, i0 + r, p);
    for (int r = mb; r < kMR; ++r) col[r] = T(0);
  }
}

template <typename T>
inline void micro_kernel(int k, const T* ap, const T* bp, T acc[kMR][kNR]) {
  for (int r = 0; r < kMR; ++r) {
    for (int c = 0; c < kNR; ++c) acc[r][c] = T(0);
  }
  for (int p = 0; p < k; ++p) {
    const T* brow = bp + static_cast<std::ptrdiff_t>(p) * kNR;
    const T* acol = ap + static_cast<std::ptrdiff_t>(p) * kMR;
    for (int r = 0; r < kMR; ++r) {
      const T av = acol[r];
#pragma omp simd
      for (int c = 0; c < kNR; ++c) acc[r][c] += av * brow[c];
    }
  }
}

template <typename T>
void gemm_packed(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a,
                 int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  const int panels = (n + kNR - 1) / kNR;
  std::vector<T> bpack(static_cast<std::size_t>(panels) * k * kNR);
  pack_b(tb, n, k, b, ldb, bpack.data());
  const int strips = (m + kMR - 1) / kMR;
  const bool parallel = static_cast<long>(m) * n * k >= kParallelWork;
#pragma omp parallel if (parallel)
  {
    std::vector<T> apack(static_cast<std::size_t>(k) * kMR);
    alignas(64) T acc[kMR][kNR];
#pragma omp for schedule(static)
    for (int s = 0; s < strips; ++s) {
      const int i0 = s * kMR;
      const int mb = std::min(kMR, m - i0);
      pack_a(ta, i0, mb, k, a, lda, apack.data());
      for (int jp = 0; jp < panels; ++jp) {
        micro_kernel(k, apack.data(), bpack.data() + static_cast<std::ptrdiff_t>(jp) * k * kNR,
                     acc);
        const int j0 = jp * kNR;
        const int nb = std::min(kNR, n - j0);
        for (int r = 0; r < mb; ++r) {
          T* crow = c + static_cast<std::ptrdiff_t>(i0 + r) * ldc + j0;
          if (beta == T(0)) {
            for (int j = 0; j < nb; ++j) crow[j] = alpha * acc[r][j];
          } else {
            for (int j = 0; j < nb; ++j) crow[j] = alpha * acc[r][j] + beta * crow[j];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    for (int i = 0; i < m; ++i) {
      scale_row(c + static_cast<std::ptrdiff_t>(i) * ldc, n, beta);
    }
    return;
  }
  gemm_packed(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
void softmax_rows(T* x, int rows, int cols, int ld) {
  const bool parallel = static_cast<long>(rows) * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (int r = 0; r < rows; ++r) {
    T* xr = x + static_cast<std::ptrdiff_t>(r) * ld;
    T mx = xr[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    T sum = 0;
    for (int j = 0; j < cols; ++j) {
      xr[j] = std::exp(xr[j] - mx);
      sum += xr[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < cols; ++j) xr[j] *= inv;
  }
}

template <typename T>
void softmax_rows_backward(const T* p, const T* dp, T* ds, int rows, int cols,
                           int ld) {
  const bool parallel = static_cast<long>(rows) * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (int r = 0; r < rows; ++r) {
    const T* pr = p + static_cast<std::ptrdiff_t>(r) * ld;
    const T* dpr = dp + static_cast<std::ptrdiff_t>(r) * ld;
    T* dsr = ds + static_cast<std::ptrdiff_t>(r) * ld;
    T dot = 0;
    for (int j = 0; j < cols; ++j) dot += pr[j] * dpr[j];
    for (int j = 0; j < cols; ++j) dsr[j] = pr[j] * (dpr[j] - dot);
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) {
        acc += at(ta, a, lda, i, p) * at(tb, b, ldb, p, j);
      }
      T& out = c[static_cast<std::ptrdiff_t>(i) * ldc + j];
      out = alpha * acc + (beta == T(0) ? T(0) : beta * out);
    }
  }
}

template <typename T>
void softmax_rows(T* x, int rows, int cols, int ld) {
  for (int r = 0; r < rows; ++r) {
    T* xr = x + static_cast<std::ptrdiff_t>(r) * ld;
    const T mx = *std::max_element(xr, xr + cols);
    T sum = 0;
    for (int j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
    for (int j = 0; j < cols; ++j) xr[j] = std::exp(xr[j] - mx) / sum;
  }
}

template <typename T>
void softmax_rows_backward(const T* p, const T* dp, T* ds, int rows, int cols,
                           int ld) {
  for (int r = 0; r < rows; ++r) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(r) * ld;
    T dot = 0;
    for (int j = 0; j < cols; ++j) dot += p[off + j] * dp[off + j];
    for (int j = 0; j < cols; ++j) {
      ds[off + j] = p[off + j] * (dp[off + j] - dot);
    }
  }
}

template void gemm<float>(Trans, Trans, int, int, int, float, const float*,
                          int, const float*, int, float, float*, int);
template void gemm<double>(Trans, Trans, int, int, int, double, const double*,
                           int, const double*, int, double, double*, int);
template void softmax_rows<float>(float*, int, int, int);
template void softmax_rows<double>(double*, int, int, int);
template void softmax_rows_backward<float>(const float*, const float*, float*,
                                           int, int, int);
template void softmax_rows_backward<double>(const double*, const double*,
                                            double*, int, int, int);

}  // namespace serial

template void gemm<float>(Trans, Trans, int, int, int, float, const float*,
                          int, const float*, int, float, float*, int);
template void gemm<double>(Trans, Trans, int, int, int, double, const double*,
                           int, const double*, int, double, double*, int);
template void softmax_rows<float>(float*, int, int, int);
template void softmax_rows<double>(double*, int, int, int);
template void softmax_rows_backward<float>(const float*, const float*, float*,
                                           int, int, int);
template void softmax_rows_backward<double>(const double*, const double*,
                                            double*, int, int, int);

}  // namespace modfuse::kernels
