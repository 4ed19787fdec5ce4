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

// Proximity-based ensemble of the three decoding branches.
//
// Each branch's box features are projected by its own linear map. The
// projected fused-branch features then cross-attend to all 3N projected
// features, with attention logits biased by
//
//   M[i, j] = alpha * || c_LC,i - c_A,j || + beta,   c_A = [c_LC; c_L; c_C]
//
// where c are predicted box centers. A separate box head decodes the result
// against the fused branch's anchors. Also provides the pooled top-k and
// NMS baselines.

#ifndef MODFUSE_PME_HPP_
#define MODFUSE_PME_HPP_

#include <random>
#include <vector>

#include "modfuse/autograd.hpp"
#include "modfuse/config.hpp"
#include "modfuse/decoder.hpp"
#include "modfuse/nn.hpp"
#include "modfuse/tokenizer.hpp"

namespace modfuse {

// N x 3N Euclidean distances from each fused-branch center to every
// center of [LC; L; C].
template <typename T>
Matrix<T> proximity_distances(const Matrix<T>& centers_lc,
                              const Matrix<T>& centers_l,
                              const Matrix<T>& centers_c);

// alpha * distance + beta.
template <typename T>
Matrix<T> proximity_bias(const Matrix<T>& centers_lc, const Matrix<T>& centers_l,
                         const Matrix<T>& centers_c, T alpha, T beta);

template <typename T>
class Pme {
 public:
  Pme() = default;
  // Parameters are registered under "pme.".
  Pme(ag::ParameterStore<T>& store, const ModelConfig& cfg, int num_classes,
      std::mt19937_64& rng);

  // Q'_m = g_m(Z_m). Throws std::invalid_argument for branch E.
  ag::Var<T> project_branch(const BoxFeatures<T>& z, Branch branch) const;

  // Ensemble cross-attention. `keys` is the 3N x D stack [Q'_LC; Q'_L; Q'_C]
  // and the centers are its 3N x 2 box centers (first N rows belong to the
  // queries). Without a bias the attention is unbiased (NME).
  BoxFeatures<T> attend(const ag::Var<T>& query, const ag::Var<T>& keys,
                        const Matrix<T>& centers, bool use_bias,
                        ag::AttentionProbe<T>* probe = nullptr) const;

  BoxPredictionSet<T> head(const BoxFeatures<T>& z_e,
                           const ag::Var<T>& anchors) const {
    return head_(z_e, anchors);
  }

  // Full ensemble over a TRAIN-mode MOAD output.
  BranchOutput<T> forward(const MoadOutput<T>& moad, const ag::Var<T>& anchors,
                          bool use_bias,
                          ag::AttentionProbe<T>* probe = nullptr) const;

  const ag::Var<T>& alpha() const { return alpha_; }
  const ag::Var<T>& beta() const { return beta_; }
  const nn::Linear<T>& projection(Branch b) const;
  const BoxHead<T>& box_head() const { return head_; }

 private:
  nn::Linear<T> g_lc_, g_l_, g_c_;
  PositionalEmbedding<T> center_pe_;
  nn::MultiHeadAttention<T> attn_;
  nn::LayerNorm<T> norm1_, norm2_;
  nn::Mlp<T> ffn_;
  BoxHead<T> head_;
  ag::Var<T> alpha_, beta_;
};

// Confidence of a prediction: its highest class probability.
template <typename T>
std::vector<double> confidences(const BoxPredictionSet<T>& p);

// Pools the given prediction sets (in order) and keeps the k most confident
// predictions, ties broken by pooled index. The result is ordered by
// descending confidence and carries no features.
template <typename T>
BoxPredictionSet<T> ensemble_topk(const std::vector<BoxPredictionSet<T>>& sets,
                                  int k);

// Pools the sets and greedily suppresses any prediction whose center lies
// within `distance` of a more confident survivor.
template <typename T>
BoxPredictionSet<T> ensemble_nms(const std::vector<BoxPredictionSet<T>>& sets,
                                 double distance);

}  // namespace modfuse

#endif  // MODFUSE_PME_HPP_
