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

#ifndef MODFUSE_NN_HPP_
#define MODFUSE_NN_HPP_

#include <cstdint>
#include <random>
#include <string>

#include "modfuse/autograd.hpp"

namespace modfuse::nn {

using ag::ParameterStore;
using ag::Var;

// Xavier-uniform weights, zero bias.
template <typename T>
struct Linear {
  Var<T> weight;  // in x out
  Var<T> bias;    // 1 x out

  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, int in, int out,
         std::mt19937_64& rng);

  Var<T> operator()(const Var<T>& x) const {
    return ag::linear(x, weight, bias);
  }
  int in() const { return weight->rows(); }
  int out() const { return weight->cols(); }
};

template <typename T>
struct LayerNorm {
  Var<T> gamma;
  Var<T> beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, int dim);

  Var<T> operator()(const Var<T>& x) const {
    return ag::layer_norm(x, gamma, beta);
  }
};

// Two linear layers with a ReLU in between.
template <typename T>
struct Mlp {
  Linear<T> fc1;
  Linear<T> fc2;

  Mlp() = default;
  Mlp(ParameterStore<T>& store, const std::string& name, int in, int hidden,
      int out, std::mt19937_64& rng);

  Var<T> operator()(const Var<T>& x) const { return fc2(ag::relu(fc1(x))); }
};

// Multi-head attention with input and output projections. The key and
// value projections are exposed separately so a projected memory can be
// shared by several callers.
template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& store, const std::string& name,
                     int dim, int heads, std::mt19937_64& rng);

  Var<T> project_keys(const Var<T>& k) const { return wk(k); }
  Var<T> project_values(const Var<T>& v) const { return wv(v); }

  // q_in is unprojected; keys and values are already projected.
  Var<T> attend(const Var<T>& q_in, const Var<T>& keys, const Var<T>& values,
                const ag::ProximityBias<T>* bias = nullptr,
                ag::AttentionProbe<T>* probe = nullptr) const {
    return wo(ag::attention(wq(q_in), keys, values, heads, bias, probe));
  }

  Var<T> operator()(const Var<T>& q_in, const Var<T>& k_in,
                    const Var<T>& v_in) const {
    return attend(q_in, project_keys(k_in), project_values(v_in));
  }
};

// Sets every entry of a parameter to `value`.
template <typename T>
void fill(const Var<T>& p, T value) {
  p->value.fill(value);
}

}  // namespace modfuse::nn

#endif  // MODFUSE_NN_HPP_
