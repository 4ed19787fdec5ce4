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

#include "modfuse/tokenizer.hpp"

#include <cmath>
#include <stdexcept>

namespace modfuse {

template <typename T>
std::vector<T> sinusoid_frequencies(int d_model, double min_wavelength,
                                    double max_wavelength) {
  if (d_model <= 0 || d_model % 4 != 0) {
    throw std::invalid_argument(
        "positional embedding: d_model must be a positive multiple of 4, got " +
        std::to_string(d_model));
  }
  const int k = d_model / 4;
  std::vector<T> freqs(k);
  for (int i = 0; i < k; ++i) {
    const double t = k == 1 ? 0.0 : static_cast<double>(i) / (k - 1);
    const double wavelength = min_wavelength * std::pow(max_wavelength / min_wavelength, t);
    freqs[i] = static_cast<T>(2.0 * M_PI / wavelength);
  }
  return freqs;
}

template <typename T>
PositionalEmbedding<T>::PositionalEmbedding(ag::ParameterStore<T>& store,
                                            const std::string& name,
                                            const ModelConfig& cfg,
                                            std::mt19937_64& rng)
    : freqs(sinusoid_frequencies<T>(cfg.d_model, cfg.pe_min_wavelength,
                                    cfg.pe_max_wavelength)),
      mlp(store, name, cfg.d_model, cfg.d_model, cfg.d_model, rng) {}

template <typename T>
Tokenizer<T>::Tokenizer(ag::ParameterStore<T>& store, const ModelConfig& cfg,
                        int features, std::mt19937_64& rng)
    : features_(features),
      lift_geo_(store, "tokenizer.geo.lift", features, cfg.d_model, rng),
      lift_sem_(store, "tokenizer.sem.lift", features, cfg.d_model, rng),
      pe_geo_(store, "tokenizer.geo.pe", cfg, rng),
      pe_sem_(store, "tokenizer.sem.pe", cfg, rng) {}

template <typename T>
TokenSet<T> Tokenizer<T>::tokenize(const SensorGrid& grid) const {
  if (grid.features != features_ || grid.values.cols() != features_) {
    throw std::invalid_argument("tokenize: grid has " +
                                std::to_string(grid.features) +
                                " features, tokenizer expects " +
                                std::to_string(features_));
  }
  if (grid.values.rows() != grid.cells() ||
      grid.cell_coords.rows() != grid.cells()) {
    throw std::invalid_argument("tokenize: grid storage does not match dims");
  }
  if (!all_finite(grid.values)) {
    throw std::invalid_argument("tokenize: non-finite grid values");
  }
  TokenSet<T> ts;
  ts.modality = grid.modality;
  ts.missing = grid.noise.missing;
  ts.coords = grid.cell_coords.template cast<T>();
  auto cells = ag::constant(grid.values.template cast<T>());
  ts.tokens = lift(grid.modality)(cells);
  ts.modality_pe = modality_positional_embedding(ag::constant(ts.coords), grid.modality);
  return ts;
}

template <typename T>
ag::Var<T> Tokenizer<T>::modality_positional_embedding(const ag::Var<T>& coords,
                                                       Modality m) const {
  return m == Modality::kGeo ? pe_geo_(coords) : pe_sem_(coords);
}

template <typename T>
QuerySet<T> Tokenizer<T>::queries(const ag::Var<T>& anchors,
                                  const ag::Var<T>& content) const {
  QuerySet<T> q;
  q.anchors = anchors;
  q.content = content;
  q.pe_geo = pe_geo_(anchors);
  q.pe_sem = pe_sem_(anchors);
  return q;
}

template <typename T>
Matrix<T> init_anchors(int n_queries, const Extent& extent, std::uint64_t seed) {
  if (n_queries < 1) throw std::invalid_argument("init_anchors: n_queries < 1");
  std::mt19937_64 rng(mix_seed(seed, 0xa7c));
  std::uniform_real_distribution<double> ux(extent.x_min, extent.x_max);
  std::uniform_real_distribution<double> uy(extent.y_min, extent.y_max);
  Matrix<T> a(n_queries, 2);
  for (int i = 0; i < n_queries; ++i) {
    a(i, 0) = static_cast<T>(ux(rng));
    a(i, 1) = static_cast<T>(uy(rng));
  }
  return a;
}

template std::vector<float> sinusoid_frequencies<float>(int, double, double);
template std::vector<double> sinusoid_frequencies<double>(int, double, double);
template struct PositionalEmbedding<float>;
template struct PositionalEmbedding<double>;
template class Tokenizer<float>;
template class Tokenizer<double>;
template Matrix<float> init_anchors<float>(int, const Extent&, std::uint64_t);
template Matrix<double> init_anchors<double>(int, const Extent&, std::uint64_t);

}  // namespace modfuse
