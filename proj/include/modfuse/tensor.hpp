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

#ifndef MODFUSE_TENSOR_HPP_
#define MODFUSE_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace modfuse {

// Dense row-major matrix. Every tensor in the model is two dimensional;
// vectors are 1 x n.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(int rows, int cols, T fill = T(0))
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
              fill) {
    if (rows < 0 || cols < 0) {
      throw std::invalid_argument("Matrix: negative dimension");
    }
  }
  Matrix(int rows, int cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * cols) {
      throw std::invalid_argument("Matrix: data size does not match shape");
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator()(int r, int c) {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  const T& operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  T* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const T* row(int r) const {
    return data_.data() + static_cast<std::size_t>(r) * cols_;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out.data()[i] = static_cast<U>(data_[i]);
    }
    return out;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff: shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

template <typename T>
bool all_finite(const Matrix<T>& a) {
  return std::all_of(a.storage().begin(), a.storage().end(),
                     [](T v) { return std::isfinite(v); });
}

// Vertical concatenation. Zero-row parts are skipped.
template <typename T>
Matrix<T> stack_rows(const std::vector<const Matrix<T>*>& parts) {
  int cols = -1;
  int rows = 0;
  for (const auto* p : parts) {
    if (p->rows() == 0) continue;
    if (cols >= 0 && p->cols() != cols) {
      throw std::invalid_argument("stack_rows: column mismatch");
    }
    cols = p->cols();
    rows += p->rows();
  }
  Matrix<T> out(rows, std::max(cols, 0));
  int r = 0;
  for (const auto* p : parts) {
    if (p->rows() == 0) continue;
    std::copy(p->data(), p->data() + p->size(), out.row(r));
    r += p->rows();
  }
  return out;
}

}  // namespace modfuse

#endif  // MODFUSE_TENSOR_HPP_
