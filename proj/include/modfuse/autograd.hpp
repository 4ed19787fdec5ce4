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

// Minimal tape-free reverse-mode automatic differentiation over 2-D
// matrices. A Var is a shared node holding its value, its accumulated
// gradient and a closure that pushes the gradient to its parents. Nodes
// that do not depend on any trainable leaf record neither parents nor a
// closure, so inference builds no graph.
//
// Everything is templated on the scalar type; float is used for training
// and double for gradient checks.

#ifndef MODFUSE_AUTOGRAD_HPP_
#define MODFUSE_AUTOGRAD_HPP_

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "modfuse/tensor.hpp"

namespace modfuse::ag {

template <typename T>
struct Node {
  Matrix<T> value;
  Matrix<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  // Zero-initialized gradient buffer, allocated on first use.
  Matrix<T>& ensure_grad() {
    if (!grad.same_shape(value)) grad = Matrix<T>(value.rows(), value.cols());
    return grad;
  }
  int rows() const { return value.rows(); }
  int cols() const { return value.cols(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

// While a guard is alive, operations on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

template <typename T>
Var<T> constant(Matrix<T> value);

// Trainable leaf.
template <typename T>
Var<T> leaf(Matrix<T> value);

// Value-only copy cut from the graph.
template <typename T>
Var<T> detach(const Var<T>& x);

// Runs reverse accumulation from a 1x1 root (seed gradient 1).
template <typename T>
void backward(const Var<T>& root);

template <typename T>
T scalar(const Var<T>& x) {
  return x->value(0, 0);
}

// ---- elementwise and structural ops ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T s);

template <typename T>
Var<T> relu(const Var<T>& a);

// x (n x in) * w (in x out) + b (1 x out); b may be null.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

// Row-wise layer normalization with affine gamma/beta (1 x cols).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  T eps = T(1e-5));

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> slice_rows(const Var<T>& a, int begin, int end);

// Returns reg with `offsets` (n x 2) added to its first two columns.
template <typename T>
Var<T> add_leading_columns(const Var<T>& reg, const Var<T>& offsets);

// Sinusoidal encoding of n x 2 coordinates into n x (4 * freqs.size())
// columns laid out as [sin(w x) | cos(w x) | sin(w y) | cos(w y)].
// Differentiable with respect to the coordinates.
template <typename T>
Var<T> sinusoid(const Var<T>& coords, const std::vector<T>& freqs);

// sum_i weights[i] * terms[i] over 1x1 terms.
template <typename T>
Var<T> weighted_sum(const std::vector<T>& weights,
                    const std::vector<Var<T>>& terms);

// ---- attention ----

// Additive logit bias alpha * dist + beta shared by all heads.
template <typename T>
struct ProximityBias {
  Var<T> alpha;    // 1x1
  Var<T> beta;     // 1x1
  Matrix<T> dist;  // queries x keys
};

// Optional output: per-head attention probabilities (queries x keys).
template <typename T>
struct AttentionProbe {
  std::vector<Matrix<T>> weights;
};

// Scaled dot-product multi-head attention on already projected q (n x d),
// k (t x d), v (t x d). With a bias, logits become
// q.k / sqrt(d_head) + alpha * dist + beta before the softmax.
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads,
                 const ProximityBias<T>* bias = nullptr,
                 AttentionProbe<T>* probe = nullptr);

// ---- losses ----

// Sigmoid focal loss. targets[i] is the positive class of row i or -1 for
// an all-negative row. The summed loss is divided by `normalizer`.
template <typename T>
Var<T> focal_loss(const Var<T>& logits, const std::vector<int>& targets,
                  T alpha, T gamma, T normalizer);

// Mean absolute error between rows pred[q] and target[g] over the given
// (q, g) pairs, averaged over pairs and columns. Zero without pairs.
template <typename T>
Var<T> l1_pairs(const Var<T>& pred, const Matrix<T>& target,
                const std::vector<std::pair<int, int>>& pairs);

// ---- parameters ----

// Named trainable leaves in deterministic (lexicographic) order.
template <typename T>
class ParameterStore {
 public:
  Var<T> create(const std::string& name, Matrix<T> init);
  Var<T> get(const std::string& name) const;
  bool contains(const std::string& name) const {
    return params_.count(name) != 0;
  }
  const std::map<std::string, Var<T>>& all() const { return params_; }
  void zero_grad();
  std::size_t total_size() const;

 private:
  std::map<std::string, Var<T>> params_;
};

}  // namespace modfuse::ag

#endif  // MODFUSE_AUTOGRAD_HPP_
