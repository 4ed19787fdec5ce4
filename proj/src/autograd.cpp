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

#include "modfuse/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "modfuse/kernels.hpp"

namespace modfuse::ag {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace {

using kernels::Trans;

template <typename T>
Var<T> make_node(Matrix<T> value, std::vector<Var<T>> parents,
                 std::function<void(Node<T>&)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool any = false;
  if (grad_enabled()) {
    for (const auto& p : parents) any = any || (p && p->requires_grad);
  }
  if (any) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

template <typename T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a->value.shape_str() + " vs " +
                                b->value.shape_str());
  }
}

// log(sigmoid(x)) without overflow.
template <typename T>
T log_sigmoid(T x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Var<T> constant(Matrix<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> leaf(Matrix<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

template <typename T>
Var<T> detach(const Var<T>& x) {
  return constant(x->value);
}

template <typename T>
void backward(const Var<T>& root) {
  if (root->value.size() != 1) {
    throw std::invalid_argument("backward: root must be 1x1, got " +
                                root->value.shape_str());
  }
  if (!root->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && p->backward_fn && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()(0, 0) += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.same_shape(n->value)) n->backward_fn(*n);
  }
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "add");
  Matrix<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b->value.data()[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += n.grad.data()[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Matrix<T> out = a->value;
  for (auto& v : out.storage()) v *= s;
  return make_node<T>(std::move(out), {a}, [s](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += s * n.grad.data()[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Matrix<T> out = a->value;
  for (auto& v : out.storage()) v = v < T(0) ? T(0) : v;  // NaN passes through
  return make_node<T>(std::move(out), {a}, [](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (n.value.data()[i] > T(0)) g.data()[i] += n.grad.data()[i];
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const int n = x->rows(), in = x->cols(), out = w->cols();
  if (w->rows() != in) {
    throw std::invalid_argument("linear: input " + x->value.shape_str() +
                                " vs weight " + w->value.shape_str());
  }
  if (b && (b->rows() != 1 || b->cols() != out)) {
    throw std::invalid_argument("linear: bias shape " + b->value.shape_str());
  }
  Matrix<T> y(n, out);
  if (b) {
    for (int r = 0; r < n; ++r) std::copy(b->value.data(), b->value.data() + out, y.row(r));
  }
  kernels::gemm(Trans::kNo, Trans::kNo, n, out, in, T(1), x->value.data(), in,
                w->value.data(), out, b ? T(1) : T(0), y.data(), out);
  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(b);
  return make_node<T>(std::move(y), std::move(parents), [n, in, out](Node<T>& node) {
    const auto& x = node.parents[0];
    const auto& w = node.parents[1];
    const T* dy = node.grad.data();
    if (x->requires_grad) {
      kernels::gemm(Trans::kNo, Trans::kYes, n, in, out, T(1), dy, out,
                    w->value.data(), out, T(1), x->ensure_grad().data(), in);
    }
    if (w->requires_grad) {
      kernels::gemm(Trans::kYes, Trans::kNo, in, out, n, T(1), x->value.data(),
                    in, dy, out, T(1), w->ensure_grad().data(), out);
    }
    if (node.parents.size() > 2 && node.parents[2]->requires_grad) {
      T* db = node.parents[2]->ensure_grad().data();
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < out; ++c) db[c] += dy[static_cast<std::size_t>(r) * out + c];
      }
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return linear<T>(a, b, nullptr);
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  T eps) {
  const int n = x->rows(), d = x->cols();
  Matrix<T> xhat(n, d), y(n, d);
  std::vector<T> inv_std(n);
  for (int r = 0; r < n; ++r) {
    const T* xr = x->value.row(r);
    T mean = 0;
    for (int c = 0; c < d; ++c) mean += xr[c];
    mean /= d;
    T var = 0;
    for (int c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= d;
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (int c = 0; c < d; ++c) {
      xhat(r, c) = (xr[c] - mean) * inv_std[r];
      y(r, c) = xhat(r, c) * gamma->value(0, c) + beta->value(0, c);
    }
  }
  return make_node<T>(
      std::move(y), {x, gamma, beta},
      [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& node) {
        const auto& x = node.parents[0];
        const auto& gamma = node.parents[1];
        const auto& beta = node.parents[2];
        if (gamma->requires_grad || beta->requires_grad) {
          auto& dg = gamma->ensure_grad();
          auto& db = beta->ensure_grad();
          for (int r = 0; r < n; ++r) {
            for (int c = 0; c < d; ++c) {
              dg(0, c) += node.grad(r, c) * xhat(r, c);
              db(0, c) += node.grad(r, c);
            }
          }
        }
        if (!x->requires_grad) return;
        auto& dx = x->ensure_grad();
        std::vector<T> dxhat(d);
        for (int r = 0; r < n; ++r) {
          T m1 = 0, m2 = 0;
          for (int c = 0; c < d; ++c) {
            dxhat[c] = node.grad(r, c) * gamma->value(0, c);
            m1 += dxhat[c];
            m2 += dxhat[c] * xhat(r, c);
          }
          m1 /= d;
          m2 /= d;
          for (int c = 0; c < d; ++c) {
            dx(r, c) += inv_std[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
          }
        }
      });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  std::vector<const Matrix<T>*> mats;
  mats.reserve(parts.size());
  for (const auto& p : parts) mats.push_back(&p->value);
  Matrix<T> out = stack_rows(mats);
  return make_node<T>(std::move(out), parts, [](Node<T>& node) {
    int r = 0;
    for (auto& p : node.parents) {
      const int pr = p->rows();
      if (pr == 0) continue;
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        const T* src = node.grad.row(r);
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += src[i];
      }
      r += pr;
    }
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, int begin, int end) {
  if (begin < 0 || end > a->rows() || begin > end) {
    throw std::out_of_range("slice_rows: bad range");
  }
  const int cols = a->cols();
  Matrix<T> out(end - begin, cols);
  std::copy(a->value.row(begin), a->value.row(begin) + out.size(), out.data());
  return make_node<T>(std::move(out), {a}, [begin](Node<T>& node) {
    auto& g = node.parents[0]->ensure_grad();
    T* dst = g.row(begin);
    for (std::size_t i = 0; i < node.grad.size(); ++i) dst[i] += node.grad.data()[i];
  });
}

template <typename T>
Var<T> add_leading_columns(const Var<T>& reg, const Var<T>& offsets) {
  if (offsets->rows() != reg->rows() || offsets->cols() > reg->cols()) {
    throw std::invalid_argument("add_leading_columns: shape mismatch");
  }
  Matrix<T> out = reg->value;
  const int k = offsets->cols();
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < k; ++c) out(r, c) += offsets->value(r, c);
  }
  return make_node<T>(std::move(out), {reg, offsets}, [k](Node<T>& node) {
    const auto& reg = node.parents[0];
    const auto& off = node.parents[1];
    if (reg->requires_grad) {
      auto& g = reg->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += node.grad.data()[i];
    }
    if (off->requires_grad) {
      auto& g = off->ensure_grad();
      for (int r = 0; r < g.rows(); ++r) {
        for (int c = 0; c < k; ++c) g(r, c) += node.grad(r, c);
      }
    }
  });
}

template <typename T>
Var<T> sinusoid(const Var<T>& coords, const std::vector<T>& freqs) {
  if (coords->cols() != 2) {
    throw std::invalid_argument("sinusoid: coords must be n x 2");
  }
  const int n = coords->rows();
  const int k = static_cast<int>(freqs.size());
  Matrix<T> out(n, 4 * k);
  for (int r = 0; r < n; ++r) {
    for (int axis = 0; axis < 2; ++axis) {
      const T x = coords->value(r, axis);
      for (int f = 0; f < k; ++f) {
        out(r, axis * 2 * k + f) = std::sin(x * freqs[f]);
        out(r, axis * 2 * k + k + f) = std::cos(x * freqs[f]);
      }
    }
  }
  return make_node<T>(std::move(out), {coords}, [k, freqs](Node<T>& node) {
    auto& g = node.parents[0]->ensure_grad();
    for (int r = 0; r < g.rows(); ++r) {
      for (int axis = 0; axis < 2; ++axis) {
        T acc = 0;
        for (int f = 0; f < k; ++f) {
          const T s = node.value(r, axis * 2 * k + f);
          const T c = node.value(r, axis * 2 * k + k + f);
          acc += freqs[f] * (c * node.grad(r, axis * 2 * k + f) -
                             s * node.grad(r, axis * 2 * k + k + f));
        }
        g(r, axis) += acc;
      }
    }
  });
}

template <typename T>
Var<T> weighted_sum(const std::vector<T>& weights,
                    const std::vector<Var<T>>& terms) {
  if (weights.size() != terms.size()) {
    throw std::invalid_argument("weighted_sum: size mismatch");
  }
  Matrix<T> out(1, 1);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    out(0, 0) += weights[i] * scalar(terms[i]);
  }
  return make_node<T>(std::move(out), terms, [weights](Node<T>& node) {
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      auto& p = node.parents[i];
      if (p->requires_grad && weights[i] != T(0)) {
        p->ensure_grad()(0, 0) += weights[i] * node.grad(0, 0);
      }
    }
  });
}

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads,
                 const ProximityBias<T>* bias, AttentionProbe<T>* probe) {
  const int n = q->rows(), t = k->rows(), d = q->cols();
  if (k->cols() != d || v->cols() != d || v->rows() != t) {
    throw std::invalid_argument("attention: q " + q->value.shape_str() +
                                ", k " + k->value.shape_str() + ", v " +
                                v->value.shape_str());
  }
  if (heads <= 0 || d % heads != 0) {
    throw std::invalid_argument("attention: width not divisible by heads");
  }
  if (t == 0) throw std::invalid_argument("attention: empty key sequence");
  if (bias && (bias->dist.rows() != n || bias->dist.cols() != t)) {
    throw std::invalid_argument("attention: bias shape " +
                                bias->dist.shape_str() + ", expected " +
                                std::to_string(n) + "x" + std::to_string(t));
  }
  const int dh = d / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Matrix<T>> probs(heads, Matrix<T>(n, t));
  Matrix<T> out(n, d);
  const T alpha = bias ? scalar(bias->alpha) : T(0);
  const T beta = bias ? scalar(bias->beta) : T(0);
  for (int h = 0; h < heads; ++h) {
    Matrix<T>& p = probs[h];
    if (bias) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        p.data()[i] = alpha * bias->dist.data()[i] + beta;
      }
    }
    kernels::gemm(Trans::kNo, Trans::kYes, n, t, dh, sc, q->value.data() + h * dh,
                  d, k->value.data() + h * dh, d, bias ? T(1) : T(0), p.data(), t);
    kernels::softmax_rows(p.data(), n, t, t);
    kernels::gemm(Trans::kNo, Trans::kNo, n, dh, t, T(1), p.data(), t,
                  v->value.data() + h * dh, d, T(0), out.data() + h * dh, d);
  }
  if (probe) probe->weights = probs;
  std::vector<Var<T>> parents{q, k, v};
  Matrix<T> dist;
  if (bias) {
    parents.push_back(bias->alpha);
    parents.push_back(bias->beta);
    dist = bias->dist;
  }
  return make_node<T>(
      std::move(out), std::move(parents),
      [n, t, d, dh, sc, heads, probs = std::move(probs),
       dist = std::move(dist)](Node<T>& node) {
        const auto& q = node.parents[0];
        const auto& k = node.parents[1];
        const auto& v = node.parents[2];
        const bool has_bias = node.parents.size() > 3;
        Matrix<T> ds(n, t);
        T dalpha = 0;
        long double dbeta = 0;
        for (int h = 0; h < heads; ++h) {
          const Matrix<T>& p = probs[h];
          const T* dout = node.grad.data() + h * dh;
          if (v->requires_grad) {
            kernels::gemm(Trans::kYes, Trans::kNo, t, dh, n, T(1), p.data(), t,
                          dout, d, T(1), v->ensure_grad().data() + h * dh, d);
          }
          // ds <- dP = dOut_h * V_h^T, then softmax backward in place.
          kernels::gemm(Trans::kNo, Trans::kYes, n, t, dh, T(1), dout, d,
                        v->value.data() + h * dh, d, T(0), ds.data(), t);
          if (has_bias) {
            // The beta derivative is sum_ij P_ij (dP_ij - r_i) with
            // r_i = sum_j P_ij dP_ij / sum_j P_ij, i.e. zero up to rounding.
            // Evaluate it in extended precision so the optimizer sees that.
            for (int i = 0; i < n; ++i) {
              long double pdp = 0, psum = 0;
              for (int j = 0; j < t; ++j) {
                pdp += static_cast<long double>(p(i, j)) * ds(i, j);
                psum += p(i, j);
              }
              dbeta += pdp - (pdp / psum) * psum;
            }
          }
          kernels::softmax_rows_backward(p.data(), ds.data(), ds.data(), n, t, t);
          if (has_bias) {
            for (std::size_t i = 0; i < ds.size(); ++i) dalpha += ds.data()[i] * dist.data()[i];
          }
          if (q->requires_grad) {
            kernels::gemm(Trans::kNo, Trans::kNo, n, dh, t, sc, ds.data(), t,
                          k->value.data() + h * dh, d, T(1),
                          q->ensure_grad().data() + h * dh, d);
          }
          if (k->requires_grad) {
            kernels::gemm(Trans::kYes, Trans::kNo, t, dh, n, sc, ds.data(), t,
                          q->value.data() + h * dh, d, T(1),
                          k->ensure_grad().data() + h * dh, d);
          }
        }
        if (has_bias) {
          if (node.parents[3]->requires_grad) node.parents[3]->ensure_grad()(0, 0) += dalpha;
          if (node.parents[4]->requires_grad) {
            node.parents[4]->ensure_grad()(0, 0) += static_cast<T>(dbeta);
          }
        }
      });
}

template <typename T>
Var<T> focal_loss(const Var<T>& logits, const std::vector<int>& targets,
                  T alpha, T gamma, T normalizer) {
  const int n = logits->rows(), c = logits->cols();
  if (static_cast<int>(targets.size()) != n) {
    throw std::invalid_argument("focal_loss: targets size mismatch");
  }
  if (!(normalizer > T(0))) {
    throw std::invalid_argument("focal_loss: normalizer must be positive");
  }
  Matrix<T> grad(n, c);
  T total = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      const T x = logits->value(i, j);
      const T p = sigmoid(x);
      const T log_p = log_sigmoid(x);
      const T log_1mp = log_sigmoid(-x);
      if (targets[i] == j) {
        const T mod = std::pow(T(1) - p, gamma);
        total += -alpha * mod * log_p;
        grad(i, j) = alpha * mod * (gamma * p * log_p - (T(1) - p));
      } else {
        const T mod = std::pow(p, gamma);
        total += -(T(1) - alpha) * mod * log_1mp;
        grad(i, j) = (T(1) - alpha) * mod * (p - gamma * (T(1) - p) * log_1mp);
      }
    }
  }
  Matrix<T> out(1, 1, total / normalizer);
  return make_node<T>(std::move(out), {logits},
                      [grad = std::move(grad), normalizer](Node<T>& node) {
                        auto& g = node.parents[0]->ensure_grad();
                        const T s = node.grad(0, 0) / normalizer;
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          g.data()[i] += s * grad.data()[i];
                        }
                      });
}

template <typename T>
Var<T> l1_pairs(const Var<T>& pred, const Matrix<T>& target,
                const std::vector<std::pair<int, int>>& pairs) {
  const int r = pred->cols();
  if (!pairs.empty() && target.cols() != r) {
    throw std::invalid_argument("l1_pairs: column mismatch");
  }
  T total = 0;
  for (const auto& [qi, gj] : pairs) {
    for (int c = 0; c < r; ++c) total += std::abs(pred->value(qi, c) - target(gj, c));
  }
  const T denom = pairs.empty() ? T(1) : static_cast<T>(pairs.size() * r);
  Matrix<T> out(1, 1, total / denom);
  return make_node<T>(std::move(out), {pred},
                      [pairs, target, r, denom](Node<T>& node) {
                        auto& g = node.parents[0]->ensure_grad();
                        const T s = node.grad(0, 0) / denom;
                        for (const auto& [qi, gj] : pairs) {
                          for (int c = 0; c < r; ++c) {
                            const T diff = node.parents[0]->value(qi, c) - target(gj, c);
                            g(qi, c) += diff > 0 ? s : (diff < 0 ? -s : T(0));
                          }
                        }
                      });
}

template <typename T>
Var<T> ParameterStore<T>::create(const std::string& name, Matrix<T> init) {
  if (params_.count(name)) {
    throw std::invalid_argument("ParameterStore: duplicate parameter " + name);
  }
  auto v = leaf(std::move(init));
  params_.emplace(name, v);
  return v;
}

template <typename T>
Var<T> ParameterStore<T>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("ParameterStore: unknown parameter " + name);
  }
  return it->second;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p->grad.same_shape(p->value)) p->grad.fill(T(0));
  }
}

template <typename T>
std::size_t ParameterStore<T>::total_size() const {
  std::size_t s = 0;
  for (const auto& [name, p] : params_) s += p->value.size();
  return s;
}

#define MODFUSE_AG_INSTANTIATE(T)                                              \
  template Var<T> constant<T>(Matrix<T>);                                      \
  template Var<T> leaf<T>(Matrix<T>);                                          \
  template Var<T> detach<T>(const Var<T>&);                                    \
  template void backward<T>(const Var<T>&);                                    \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                        \
  template Var<T> scale<T>(const Var<T>&, T);                                  \
  template Var<T> relu<T>(const Var<T>&);                                      \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);      \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                     \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T); \
  template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                  \
  template Var<T> slice_rows<T>(const Var<T>&, int, int);                      \
  template Var<T> add_leading_columns<T>(const Var<T>&, const Var<T>&);        \
  template Var<T> sinusoid<T>(const Var<T>&, const std::vector<T>&);           \
  template Var<T> weighted_sum<T>(const std::vector<T>&,                       \
                                  const std::vector<Var<T>>&);                 \
  template Var<T> attention<T>(const Var<T>&, const Var<T>&, const Var<T>&,    \
                               int, const ProximityBias<T>*,                   \
                               AttentionProbe<T>*);                            \
  template Var<T> focal_loss<T>(const Var<T>&, const std::vector<int>&, T, T,  \
                                T);                                            \
  template Var<T> l1_pairs<T>(const Var<T>&, const Matrix<T>&,                 \
                              const std::vector<std::pair<int, int>>&);        \
  template class ParameterStore<T>;

MODFUSE_AG_INSTANTIATE(float)
MODFUSE_AG_INSTANTIATE(double)

#undef MODFUSE_AG_INSTANTIATE

}  // namespace modfuse::ag
