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

// Dense compute kernels used by the autograd engine.
//
// Every kernel has two implementations: the OpenMP-parallel one in
// modfuse::kernels, used everywhere in the library, and a plain serial
// reference in modfuse::kernels::serial that the unit tests and the
// benchmark compare against. Parallel kernels split work only over output
// rows and keep the per-row accumulation order fixed, so results do not
// depend on the thread count.

#ifndef MODFUSE_KERNELS_HPP_
#define MODFUSE_KERNELS_HPP_

namespace modfuse::kernels {

enum class Trans { kNo, kYes };

// C = alpha * op(A) * op(B) + beta * C, with op(A) m x k and op(B) k x n.
// Leading dimensions are row strides (row-major storage).
template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc);

// In-place numerically stable softmax over each of `rows` rows of length
// `cols` (row stride `ld`).
template <typename T>
void softmax_rows(T* x, int rows, int cols, int ld);

// Softmax backward: given probabilities p and upstream grad dp, writes
// ds = p * (dp - sum_j p_j dp_j) row by row. ds may alias dp.
template <typename T>
void softmax_rows_backward(const T* p, const T* dp, T* ds, int rows, int cols,
                           int ld);

namespace serial {

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc);

template <typename T>
void softmax_rows(T* x, int rows, int cols, int ld);

template <typename T>
void softmax_rows_backward(const T* p, const T* dp, T* ds, int rows, int cols,
                           int ld);

}  // namespace serial

// Number of OpenMP threads the parallel kernels will use (1 when built
// without OpenMP).
int max_threads();

}  // namespace modfuse::kernels

#endif  // MODFUSE_KERNELS_HPP_
