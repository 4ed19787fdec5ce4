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

#ifndef MODFUSE_TOKENIZER_HPP_
#define MODFUSE_TOKENIZER_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "modfuse/autograd.hpp"
#include "modfuse/config.hpp"
#include "modfuse/nn.hpp"
#include "modfuse/world.hpp"

namespace modfuse {

// A modality's feature map flattened to tokens. Row i of tokens, coords and
// modality_pe all describe grid cell i (row-major).
template <typename T>
struct TokenSet {
  ag::Var<T> tokens;       // cells x d_model
  Matrix<T> coords;        // cells x 2, BEV meters
  ag::Var<T> modality_pe;  // cells x d_model
  Modality modality = Modality::kGeo;
  bool missing = false;

  int size() const { return tokens ? tokens->rows() : 0; }
};

// Object queries shared by every decoding branch. Anchors and content are
// trainable; the per-modality query embeddings are derived from the anchors.
template <typename T>
struct QuerySet {
  ag::Var<T> anchors;  // n x 2, BEV meters
  ag::Var<T> content;  // n x d_model
  ag::Var<T> pe_geo;   // n x d_model
  ag::Var<T> pe_sem;   // n x d_model

  int size() const { return anchors->rows(); }
  // Query embedding of the fused branch: pe_geo + pe_sem.
  ag::Var<T> pe_fused() const { return ag::add(pe_geo, pe_sem); }
};

// Geometric wavelengths from min to max, as angular frequencies, with
// d_model / 4 entries. Throws if d_model is not a multiple of 4.
template <typename T>
std::vector<T> sinusoid_frequencies(int d_model, double min_wavelength,
                                    double max_wavelength);

// Sinusoidal encoding of coordinates followed by a learned two-layer map.
template <typename T>
struct PositionalEmbedding {
  std::vector<T> freqs;
  nn::Mlp<T> mlp;

  PositionalEmbedding() = default;
  PositionalEmbedding(ag::ParameterStore<T>& store, const std::string& name,
                      const ModelConfig& cfg, std::mt19937_64& rng);

  ag::Var<T> operator()(const ag::Var<T>& coords) const {
    return mlp(ag::sinusoid(coords, freqs));
  }
};

template <typename T>
class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(ag::ParameterStore<T>& store, const ModelConfig& cfg,
            int features, std::mt19937_64& rng);

  // Lifts every cell's features to d_model with the modality's linear map.
  // Throws std::invalid_argument on a feature-count mismatch.
  TokenSet<T> tokenize(const SensorGrid& grid) const;

  // Gamma_L / Gamma_C for arbitrary coordinates.
  ag::Var<T> modality_positional_embedding(const ag::Var<T>& coords,
                                           Modality m) const;

  QuerySet<T> queries(const ag::Var<T>& anchors,
                      const ag::Var<T>& content) const;

  const nn::Linear<T>& lift(Modality m) const {
    return m == Modality::kGeo ? lift_geo_ : lift_sem_;
  }
  int features() const { return features_; }

 private:
  int features_ = 0;
  nn::Linear<T> lift_geo_;
  nn::Linear<T> lift_sem_;
  PositionalEmbedding<T> pe_geo_;
  PositionalEmbedding<T> pe_sem_;
};

// Anchors drawn uniformly over the extent.
template <typename T>
Matrix<T> init_anchors(int n_queries, const Extent& extent, std::uint64_t seed);

}  // namespace modfuse

#endif  // MODFUSE_TOKENIZER_HPP_
