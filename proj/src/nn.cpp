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

#include "modfuse/nn.hpp"

#include <cmath>

namespace modfuse::nn {

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, int in,
                  int out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<T> w(in, out);
  for (auto& v : w.storage()) v = static_cast<T>(dist(rng));
  weight = store.create(name + ".weight", std::move(w));
  bias = store.create(name + ".bias", Matrix<T>(1, out));
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& store, const std::string& name,
                        int dim) {
  gamma = store.create(name + ".gamma", Matrix<T>(1, dim, T(1)));
  beta = store.create(name + ".beta", Matrix<T>(1, dim));
}

template <typename T>
Mlp<T>::Mlp(ParameterStore<T>& store, const std::string& name, int in,
            int hidden, int out, std::mt19937_64& rng)
    : fc1(store, name + ".fc1", in, hidden, rng),
      fc2(store, name + ".fc2", hidden, out, rng) {}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterStore<T>& store,
                                          const std::string& name, int dim,
                                          int heads_, std::mt19937_64& rng)
    : wq(store, name + ".wq", dim, dim, rng),
      wk(store, name + ".wk", dim, dim, rng),
      wv(store, name + ".wv", dim, dim, rng),
      wo(store, name + ".wo", dim, dim, rng),
      heads(heads_) {}

template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct Mlp<float>;
template struct Mlp<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;

}  // namespace modfuse::nn
