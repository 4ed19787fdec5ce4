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

// Modality-agnostic decoding: one transformer decoder and one box head,
// run as three branches over the same object queries.
//
//   LC: keys [X_L; X_C], query embedding Gamma_L + Gamma_C
//   L:  keys X_L,        query embedding Gamma_L
//   C:  keys X_C,        query embedding Gamma_C
//
// Every branch reads the same parameter objects; nothing is copied.

#ifndef MODFUSE_DECODER_HPP_
#define MODFUSE_DECODER_HPP_

#include <map>
#include <random>
#include <string>
#include <vector>

#include "modfuse/autograd.hpp"
#include "modfuse/config.hpp"
#include "modfuse/nn.hpp"
#include "modfuse/tokenizer.hpp"

namespace modfuse {

enum class Branch { kLC, kL, kC, kE };

std::string to_string(Branch b);

template <typename T>
struct BoxFeatures {
  ag::Var<T> features;  // n x d_model
  Branch branch = Branch::kLC;
};

// Regression vector per query: (dx, dy, log w, log l) with (dx, dy) relative
// to the query anchor. `decoded` is (x, y, log w, log l) in the world frame.
template <typename T>
struct BoxPredictionSet {
  ag::Var<T> boxes;    // n x 4 raw regression
  ag::Var<T> logits;   // n x num_classes, sigmoid scores
  ag::Var<T> decoded;  // n x 4
  Branch branch = Branch::kLC;

  int size() const { return boxes->rows(); }
  // Predicted BEV centers (first two decoded columns).
  Matrix<T> centers() const;
};

// Recomputes decoded boxes from a regression matrix and anchors.
template <typename T>
Matrix<T> decode_boxes(const Matrix<T>& boxes, const Matrix<T>& anchors);

template <typename T>
struct DecoderLayer {
  nn::MultiHeadAttention<T> self_attn;
  nn::MultiHeadAttention<T> cross_attn;
  nn::LayerNorm<T> norm1, norm2, norm3;
  nn::Mlp<T> ffn;

  DecoderLayer() = default;
  DecoderLayer(ag::ParameterStore<T>& store, const std::string& name,
               const ModelConfig& cfg, std::mt19937_64& rng);
};

// Per-layer key/value projections of one token set, reusable across
// branches within a forward pass.
template <typename T>
struct ProjectedMemory {
  std::vector<ag::Var<T>> keys;
  std::vector<ag::Var<T>> values;
};

template <typename T>
class SharedDecoder {
 public:
  SharedDecoder() = default;
  SharedDecoder(ag::ParameterStore<T>& store, const ModelConfig& cfg,
                std::mt19937_64& rng);

  ProjectedMemory<T> project(const TokenSet<T>& tokens) const;

  // Runs all layers with the given query embedding over the concatenation
  // of the memories (in order). Empty memories contribute no keys.
  ag::Var<T> run(const QuerySet<T>& queries, const ag::Var<T>& query_pe,
                 const std::vector<const ProjectedMemory<T>*>& memories) const;

  const std::vector<DecoderLayer<T>>& layers() const { return layers_; }

 private:
  std::vector<DecoderLayer<T>> layers_;
};

// Modality-agnostic box head: independent regression and classification
// stacks shared by every branch it is applied to.
template <typename T>
struct BoxHead {
  nn::Mlp<T> reg;
  nn::Mlp<T> cls;

  BoxHead() = default;
  BoxHead(ag::ParameterStore<T>& store, const std::string& name,
          const ModelConfig& cfg, int num_classes, std::mt19937_64& rng);

  BoxPredictionSet<T> operator()(const BoxFeatures<T>& z,
                                 const ag::Var<T>& anchors) const;
};

enum class MoadMode { kTrain, kTestLC, kTestL, kTestC };

template <typename T>
struct BranchOutput {
  BoxFeatures<T> features;
  BoxPredictionSet<T> predictions;
};

template <typename T>
using MoadOutput = std::map<Branch, BranchOutput<T>>;

// The decoder, head and query parameters of the detector.
template <typename T>
class MoadDecoder {
 public:
  MoadDecoder() = default;
  MoadDecoder(ag::ParameterStore<T>& store, const ModelConfig& cfg,
              const Extent& extent, int num_classes, std::mt19937_64& rng);

  QuerySet<T> queries(const Tokenizer<T>& tokenizer) const {
    return tokenizer.queries(anchors_, content_);
  }

  // One decoding branch. `inputs` must contain the token sets the branch
  // needs (geo for L, sem for C, both for LC); throws otherwise.
  BoxFeatures<T> decode_branch(const QuerySet<T>& queries,
                               const std::vector<const TokenSet<T>*>& inputs,
                               Branch branch) const;

  BoxPredictionSet<T> box_head(const BoxFeatures<T>& z,
                               const QuerySet<T>& queries) const {
    return head_(z, queries.anchors);
  }

  // TRAIN returns LC, L and C; TEST_* returns exactly one branch. Either
  // token set may be null when the mode does not need it.
  MoadOutput<T> forward(const QuerySet<T>& queries, const TokenSet<T>* geo,
                        const TokenSet<T>* sem, MoadMode mode) const;

  const SharedDecoder<T>& decoder() const { return decoder_; }
  const BoxHead<T>& head() const { return head_; }
  const ag::Var<T>& anchors() const { return anchors_; }
  const ag::Var<T>& content() const { return content_; }

 private:
  ag::Var<T> anchors_;
  ag::Var<T> content_;
  SharedDecoder<T> decoder_;
  BoxHead<T> head_;
};

}  // namespace modfuse

#endif  // MODFUSE_DECODER_HPP_
