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

#include "modfuse/pme.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace modfuse {

template <typename T>
Matrix<T> proximity_distances(const Matrix<T>& centers_lc,
                              const Matrix<T>& centers_l,
                              const Matrix<T>& centers_c) {
  const int n = centers_lc.rows();
  if (centers_lc.cols() != 2 || centers_l.cols() != 2 || centers_c.cols() != 2 ||
      centers_l.rows() != n || centers_c.rows() != n) {
    throw std::invalid_argument("proximity_distances: expected three N x 2 center sets");
  }
  Matrix<T> all = stack_rows<T>({&centers_lc, &centers_l, &centers_c});
  Matrix<T> d(n, 3 * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3 * n; ++j) {
      d(i, j) = std::hypot(centers_lc(i, 0) - all(j, 0), centers_lc(i, 1) - all(j, 1));
    }
  }
  return d;
}

template <typename T>
Matrix<T> proximity_bias(const Matrix<T>& centers_lc, const Matrix<T>& centers_l,
                         const Matrix<T>& centers_c, T alpha, T beta) {
  Matrix<T> m = proximity_distances(centers_lc, centers_l, centers_c);
  for (auto& v : m.storage()) v = alpha * v + beta;
  return m;
}

template <typename T>
Pme<T>::Pme(ag::ParameterStore<T>& store, const ModelConfig& cfg,
            int num_classes, std::mt19937_64& rng)
    : g_lc_(store, "pme.g_lc", cfg.d_model, cfg.d_model, rng),
      g_l_(store, "pme.g_l", cfg.d_model, cfg.d_model, rng),
      g_c_(store, "pme.g_c", cfg.d_model, cfg.d_model, rng),
      center_pe_(store, "pme.center_pe", cfg, rng),
      attn_(store, "pme.attn", cfg.d_model, cfg.pme_heads, rng),
      norm1_(store, "pme.norm1", cfg.d_model),
      norm2_(store, "pme.norm2", cfg.d_model),
      ffn_(store, "pme.ffn", cfg.d_model, cfg.ffn_hidden, cfg.d_model, rng),
      head_(store, "pme.head", cfg, num_classes, rng) {
  alpha_ = store.create("pme.alpha", Matrix<T>(1, 1, static_cast<T>(cfg.alpha_init)));
  beta_ = store.create("pme.beta", Matrix<T>(1, 1, static_cast<T>(cfg.beta_init)));
}

template <typename T>
const nn::Linear<T>& Pme<T>::projection(Branch b) const {
  switch (b) {
    case Branch::kLC: return g_lc_;
    case Branch::kL: return g_l_;
    case Branch::kC: return g_c_;
    case Branch::kE: break;
  }
  throw std::invalid_argument("pme: no projection for branch " + to_string(b));
}

template <typename T>
ag::Var<T> Pme<T>::project_branch(const BoxFeatures<T>& z, Branch branch) const {
  return projection(branch)(z.features);
}

template <typename T>
BoxFeatures<T> Pme<T>::attend(const ag::Var<T>& query, const ag::Var<T>& keys,
                              const Matrix<T>& centers, bool use_bias,
                              ag::AttentionProbe<T>* probe) const {
  const int n = query->rows();
  if (keys->rows() != 3 * n || centers.rows() != 3 * n || centers.cols() != 2 ||
      keys->cols() != query->cols()) {
    throw std::invalid_argument("pme attend: expected 3N keys and centers, got " +
                                keys->value.shape_str() + " / " +
                                centers.shape_str() + " for N=" + std::to_string(n));
  }
  auto pe_all = center_pe_(ag::constant(centers));
  auto pe_q = ag::slice_rows(pe_all, 0, n);
  auto q_in = ag::add(query, pe_q);
  auto k = attn_.project_keys(ag::add(keys, pe_all));
  auto v = attn_.project_values(keys);

  ag::ProximityBias<T> bias;
  if (use_bias) {
    bias.alpha = alpha_;
    bias.beta = beta_;
    Matrix<T> lc(n, 2), l(n, 2), c(n, 2);
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        lc(i, d) = centers(i, d);
        l(i, d) = centers(n + i, d);
        c(i, d) = centers(2 * n + i, d);
      }
    }
    bias.dist = proximity_distances(lc, l, c);
  }
  auto attended = attn_.attend(q_in, k, v, use_bias ? &bias : nullptr, probe);
  BoxFeatures<T> z;
  z.branch = Branch::kE;
  z.features = norm1_(ag::add(query, attended));
  z.features = norm2_(ag::add(z.features, ffn_(z.features)));
  return z;
}

template <typename T>
BranchOutput<T> Pme<T>::forward(const MoadOutput<T>& moad,
                                const ag::Var<T>& anchors, bool use_bias,
                                ag::AttentionProbe<T>* probe) const {
  const Branch order[3] = {Branch::kLC, Branch::kL, Branch::kC};
  std::vector<ag::Var<T>> projected;
  std::vector<Matrix<T>> centers;
  for (Branch b : order) {
    auto it = moad.find(b);
    if (it == moad.end()) {
      throw std::invalid_argument("pme: missing branch " + to_string(b) +
                                  "; a missing modality must use single-branch inference");
    }
    projected.push_back(project_branch(it->second.features, b));
    centers.push_back(it->second.predictions.centers());
  }
  auto keys = ag::concat_rows(projected);
  Matrix<T> all = stack_rows<T>({&centers[0], &centers[1], &centers[2]});
  BranchOutput<T> out;
  out.features = attend(projected[0], keys, all, use_bias, probe);
  out.predictions = head_(out.features, anchors);
  return out;
}

template <typename T>
std::vector<double> confidences(const BoxPredictionSet<T>& p) {
  const auto& lg = p.logits->value;
  std::vector<double> conf(lg.rows());
  for (int i = 0; i < lg.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < lg.cols(); ++c) best = std::max(best, static_cast<double>(lg(i, c)));
    conf[i] = 1.0 / (1.0 + std::exp(-best));
  }
  return conf;
}

namespace {

template <typename T>
struct Pool {
  Matrix<T> boxes, logits, decoded;
  std::vector<double> conf;
};

template <typename T>
Pool<T> pool(const std::vector<BoxPredictionSet<T>>& sets) {
  Pool<T> p;
  std::vector<const Matrix<T>*> b, l, d;
  for (const auto& s : sets) {
    b.push_back(&s.boxes->value);
    l.push_back(&s.logits->value);
    d.push_back(&s.decoded->value);
    auto c = confidences(s);
    p.conf.insert(p.conf.end(), c.begin(), c.end());
  }
  p.boxes = stack_rows<T>(b);
  p.logits = stack_rows<T>(l);
  p.decoded = stack_rows<T>(d);
  return p;
}

template <typename T>
BoxPredictionSet<T> select(const Pool<T>& p, const std::vector<int>& idx) {
  auto take = [&](const Matrix<T>& m) {
    Matrix<T> out(static_cast<int>(idx.size()), m.cols());
    for (int r = 0; r < out.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) out(r, c) = m(idx[r], c);
    }
    return ag::constant(std::move(out));
  };
  BoxPredictionSet<T> s;
  s.branch = Branch::kE;
  s.boxes = take(p.boxes);
  s.logits = take(p.logits);
  s.decoded = take(p.decoded);
  return s;
}

std::vector<int> ranked(const std::vector<double>& conf) {
  std::vector<int> order(conf.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return conf[a] > conf[b]; });
  return order;
}

}  // namespace

template <typename T>
BoxPredictionSet<T> ensemble_topk(const std::vector<BoxPredictionSet<T>>& sets,
                                  int k) {
  if (k < 0) throw std::invalid_argument("ensemble_topk: k < 0");
  auto p = pool(sets);
  auto order = ranked(p.conf);
  if (static_cast<int>(order.size()) > k) order.resize(k);
  return select(p, order);
}

template <typename T>
BoxPredictionSet<T> ensemble_nms(const std::vector<BoxPredictionSet<T>>& sets,
                                 double distance) {
  if (distance < 0) throw std::invalid_argument("ensemble_nms: negative distance");
  auto p = pool(sets);
  std::vector<int> keep;
  for (int i : ranked(p.conf)) {
    bool suppressed = false;
    for (int j : keep) {
      const double dx = p.decoded(i, 0) - p.decoded(j, 0);
      const double dy = p.decoded(i, 1) - p.decoded(j, 1);
      if (std::hypot(dx, dy) <= distance) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) keep.push_back(i);
  }
  return select(p, keep);
}

template Matrix<float> proximity_distances<float>(const Matrix<float>&, const Matrix<float>&,
                                                  const Matrix<float>&);
template Matrix<double> proximity_distances<double>(const Matrix<double>&,
                                                    const Matrix<double>&,
                                                    const Matrix<double>&);
template Matrix<float> proximity_bias<float>(const Matrix<float>&, const Matrix<float>&,
                                             const Matrix<float>&, float, float);
template Matrix<double> proximity_bias<double>(const Matrix<double>&, const Matrix<double>&,
                                               const Matrix<double>&, double, double);
template class Pme<float>;
template class Pme<double>;
template std::vector<double> confidences<float>(const BoxPredictionSet<float>&);
template std::vector<double> confidences<double>(const BoxPredictionSet<double>&);
template BoxPredictionSet<float> ensemble_topk<float>(
    const std::vector<BoxPredictionSet<float>>&, int);
template BoxPredictionSet<double> ensemble_topk<double>(
    const std::vector<BoxPredictionSet<double>>&, int);
template BoxPredictionSet<float> ensemble_nms<float>(
    const std::vector<BoxPredictionSet<float>>&, double);
template BoxPredictionSet<double> ensemble_nms<double>(
    const std::vector<BoxPredictionSet<double>>&, double);

}  // namespace modfuse
