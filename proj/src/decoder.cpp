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

#include "modfuse/decoder.hpp"

#include <cmath>
#include <stdexcept>

namespace modfuse {

std::string to_string(Branch b) {
  switch (b) {
    case Branch::kLC: return "LC";
    case Branch::kL: return "L";
    case Branch::kC: return "C";
    case Branch::kE: return "E";
  }
  return "?";
}

template <typename T>
Matrix<T> BoxPredictionSet<T>::centers() const {
  Matrix<T> c(decoded->rows(), 2);
  for (int i = 0; i < c.rows(); ++i) {
    c(i, 0) = decoded->value(i, 0);
    c(i, 1) = decoded->value(i, 1);
  }
  return c;
}

template <typename T>
Matrix<T> decode_boxes(const Matrix<T>& boxes, const Matrix<T>& anchors) {
  if (boxes.rows() != anchors.rows() || boxes.cols() < 2 || anchors.cols() != 2) {
    throw std::invalid_argument("decode_boxes: shape mismatch " +
                                boxes.shape_str() + " vs " + anchors.shape_str());
  }
  Matrix<T> out = boxes;
  for (int i = 0; i < out.rows(); ++i) {
    out(i, 0) = boxes(i, 0) + anchors(i, 0);
    out(i, 1) = boxes(i, 1) + anchors(i, 1);
  }
  return out;
}

template <typename T>
DecoderLayer<T>::DecoderLayer(ag::ParameterStore<T>& store,
                              const std::string& name, const ModelConfig& cfg,
                              std::mt19937_64& rng)
    : self_attn(store, name + ".self_attn", cfg.d_model, cfg.heads, rng),
      cross_attn(store, name + ".cross_attn", cfg.d_model, cfg.heads, rng),
      norm1(store, name + ".norm1", cfg.d_model),
      norm2(store, name + ".norm2", cfg.d_model),
      norm3(store, name + ".norm3", cfg.d_model),
      ffn(store, name + ".ffn", cfg.d_model, cfg.ffn_hidden, cfg.d_model, rng) {}

template <typename T>
SharedDecoder<T>::SharedDecoder(ag::ParameterStore<T>& store,
                                const ModelConfig& cfg, std::mt19937_64& rng) {
  if (cfg.layers < 1) throw std::invalid_argument("decoder: layers < 1");
  if (cfg.d_model % cfg.heads != 0) {
    throw std::invalid_argument("decoder: d_model not divisible by heads");
  }
  layers_.reserve(cfg.layers);
  for (int i = 0; i < cfg.layers; ++i) {
    layers_.emplace_back(store, "decoder.layer" + std::to_string(i), cfg, rng);
  }
}

template <typename T>
ProjectedMemory<T> SharedDecoder<T>::project(const TokenSet<T>& tokens) const {
  ProjectedMemory<T> mem;
  auto keyed = ag::add(tokens.tokens, tokens.modality_pe);
  for (const auto& layer : layers_) {
    mem.keys.push_back(layer.cross_attn.project_keys(keyed));
    mem.values.push_back(layer.cross_attn.project_values(tokens.tokens));
  }
  return mem;
}

template <typename T>
ag::Var<T> SharedDecoder<T>::run(
    const QuerySet<T>& queries, const ag::Var<T>& query_pe,
    const std::vector<const ProjectedMemory<T>*>& memories) const {
  if (memories.empty()) throw std::invalid_argument("decoder: no memory");
  ag::Var<T> tgt = queries.content;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    std::vector<ag::Var<T>> ks, vs;
    for (const auto* m : memories) {
      if (m->keys[l]->rows() == 0) continue;
      ks.push_back(m->keys[l]);
      vs.push_back(m->values[l]);
    }
    if (ks.empty()) throw std::invalid_argument("decoder: empty memory");
    auto keys = ks.size() == 1 ? ks[0] : ag::concat_rows(ks);
    auto values = vs.size() == 1 ? vs[0] : ag::concat_rows(vs);

    auto q = ag::add(tgt, query_pe);
    tgt = layer.norm1(ag::add(tgt, layer.self_attn(q, q, tgt)));
    q = ag::add(tgt, query_pe);
    tgt = layer.norm2(ag::add(tgt, layer.cross_attn.attend(q, keys, values)));
    tgt = layer.norm3(ag::add(tgt, layer.ffn(tgt)));
  }
  return tgt;
}

template <typename T>
BoxHead<T>::BoxHead(ag::ParameterStore<T>& store, const std::string& name,
                    const ModelConfig& cfg, int num_classes,
                    std::mt19937_64& rng)
    : reg(store, name + ".reg", cfg.d_model, cfg.d_model, 4, rng),
      cls(store, name + ".cls", cfg.d_model, cfg.d_model, num_classes, rng) {
  const double prior = cfg.cls_prior;
  nn::fill(cls.fc2.bias, static_cast<T>(-std::log((1.0 - prior) / prior)));
}

template <typename T>
BoxPredictionSet<T> BoxHead<T>::operator()(const BoxFeatures<T>& z,
                                           const ag::Var<T>& anchors) const {
  BoxPredictionSet<T> p;
  p.branch = z.branch;
  p.boxes = reg(z.features);
  p.logits = cls(z.features);
  p.decoded = ag::add_leading_columns(p.boxes, anchors);
  return p;
}

template <typename T>
MoadDecoder<T>::MoadDecoder(ag::ParameterStore<T>& store,
                            const ModelConfig& cfg, const Extent& extent,
                            int num_classes, std::mt19937_64& rng) {
  anchors_ = store.create("query.anchors",
                          init_anchors<T>(cfg.n_queries, extent, cfg.init_seed));
  content_ = store.create("query.content", Matrix<T>(cfg.n_queries, cfg.d_model));
  decoder_ = SharedDecoder<T>(store, cfg, rng);
  head_ = BoxHead<T>(store, "head", cfg, num_classes, rng);
}

namespace {

template <typename T>
const TokenSet<T>* find_modality(const std::vector<const TokenSet<T>*>& inputs,
                                 Modality m) {
  for (const auto* t : inputs) {
    if (t != nullptr && t->modality == m) return t;
  }
  return nullptr;
}

template <typename T>
void require(const TokenSet<T>* t, Branch b, const char* what) {
  if (t == nullptr) {
    throw std::invalid_argument("branch " + to_string(b) + " requires the " +
                                what + " token set");
  }
}

}  // namespace

template <typename T>
BoxFeatures<T> MoadDecoder<T>::decode_branch(
    const QuerySet<T>& queries, const std::vector<const TokenSet<T>*>& inputs,
    Branch branch) const {
  const auto* geo = find_modality(inputs, Modality::kGeo);
  const auto* sem = find_modality(inputs, Modality::kSem);
  BoxFeatures<T> z;
  z.branch = branch;
  switch (branch) {
    case Branch::kLC: {
      require(geo, branch, "geometric");
      require(sem, branch, "semantic");
      auto mg = decoder_.project(*geo);
      auto ms = decoder_.project(*sem);
      z.features = decoder_.run(queries, queries.pe_fused(), {&mg, &ms});
      break;
    }
    case Branch::kL: {
      require(geo, branch, "geometric");
      auto mg = decoder_.project(*geo);
      z.features = decoder_.run(queries, queries.pe_geo, {&mg});
      break;
    }
    case Branch::kC: {
      require(sem, branch, "semantic");
      auto ms = decoder_.project(*sem);
      z.features = decoder_.run(queries, queries.pe_sem, {&ms});
      break;
    }
    case Branch::kE:
      throw std::invalid_argument("decode_branch: E is not a decoding branch");
  }
  return z;
}

template <typename T>
MoadOutput<T> MoadDecoder<T>::forward(const QuerySet<T>& queries,
                                      const TokenSet<T>* geo,
                                      const TokenSet<T>* sem,
                                      MoadMode mode) const {
  MoadOutput<T> out;
  auto emit = [&](Branch b, ag::Var<T> features) {
    BranchOutput<T> o;
    o.features = {std::move(features), b};
    o.predictions = head_(o.features, queries.anchors);
    out.emplace(b, std::move(o));
  };
  switch (mode) {
    case MoadMode::kTrain: {
      require(geo, Branch::kLC, "geometric");
      require(sem, Branch::kLC, "semantic");
      auto mg = decoder_.project(*geo);
      auto ms = decoder_.project(*sem);
      emit(Branch::kLC, decoder_.run(queries, queries.pe_fused(), {&mg, &ms}));
      emit(Branch::kL, decoder_.run(queries, queries.pe_geo, {&mg}));
      emit(Branch::kC, decoder_.run(queries, queries.pe_sem, {&ms}));
      break;
    }
    case MoadMode::kTestLC: {
      require(geo, Branch::kLC, "geometric");
      require(sem, Branch::kLC, "semantic");
      if (geo->missing || sem->missing) {
        throw std::invalid_argument(
            "TEST_LC with a missing modality; use TEST_L or TEST_C");
      }
      emit(Branch::kLC, decode_branch(queries, {geo, sem}, Branch::kLC).features);
      break;
    }
    case MoadMode::kTestL:
      require(geo, Branch::kL, "geometric");
      emit(Branch::kL, decode_branch(queries, {geo}, Branch::kL).features);
      break;
    case MoadMode::kTestC:
      require(sem, Branch::kC, "semantic");
      emit(Branch::kC, decode_branch(queries, {sem}, Branch::kC).features);
      break;
  }
  return out;
}

template struct BoxPredictionSet<float>;
template struct BoxPredictionSet<double>;
template Matrix<float> decode_boxes<float>(const Matrix<float>&, const Matrix<float>&);
template Matrix<double> decode_boxes<double>(const Matrix<double>&, const Matrix<double>&);
template struct DecoderLayer<float>;
template struct DecoderLayer<double>;
template class SharedDecoder<float>;
template class SharedDecoder<double>;
template struct BoxHead<float>;
template struct BoxHead<double>;
template class MoadDecoder<float>;
template class MoadDecoder<double>;

}  // namespace modfuse
