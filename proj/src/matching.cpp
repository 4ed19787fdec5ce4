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

#include "modfuse/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace modfuse {

template <typename T>
Matrix<T> box_targets(const std::vector<GroundTruthBox>& gts) {
  Matrix<T> t(static_cast<int>(gts.size()), 4);
  for (int j = 0; j < t.rows(); ++j) {
    t(j, 0) = static_cast<T>(gts[j].x);
    t(j, 1) = static_cast<T>(gts[j].y);
    t(j, 2) = static_cast<T>(std::log(gts[j].w));
    t(j, 3) = static_cast<T>(std::log(gts[j].l));
  }
  return t;
}

template <typename T>
Matrix<double> pairwise_cost(const BoxPredictionSet<T>& preds,
                             const std::vector<GroundTruthBox>& gts,
                             const LossWeights& w) {
  const int n = preds.size();
  const int g = static_cast<int>(gts.size());
  Matrix<double> cost(n, g);
  if (g == 0) return cost;
  const auto& dec = preds.decoded->value;
  const auto& logits = preds.logits->value;
  const Matrix<double> tgt = box_targets<double>(gts);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < g; ++j) {
      double l1 = 0;
      for (int d = 0; d < 4; ++d) l1 += std::abs(static_cast<double>(dec(i, d)) - tgt(j, d));
      l1 /= 4.0;
      const int cls = gts[j].class_id;
      if (cls < 0 || cls >= logits.cols()) {
        throw std::invalid_argument("pairwise_cost: class id out of range");
      }
      const double x = logits(i, cls);
      const double p = 1.0 / (1.0 + std::exp(-x));
      // -log sigmoid(x), stable for large |x|.
      const double nlp = x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
      const double cls_cost = w.focal_alpha * std::pow(1.0 - p, w.focal_gamma) * nlp;
      cost(i, j) = w.w_reg * l1 + w.w_cls * cls_cost;
    }
  }
  return cost;
}

namespace {

struct Solution {
  std::vector<int> row_to_col;  // square problem
  std::vector<double> u, v;     // dual potentials (row, col)
  double total = 0;
};

// O(n^3) shortest augmenting path with potentials on a square matrix.
Solution solve_square(const std::vector<double>& a, int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Solution s;
  s.row_to_col.assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) s.row_to_col[p[j] - 1] = j - 1;
  }
  s.u.assign(u.begin() + 1, u.end());
  s.v.assign(v.begin() + 1, v.end());
  for (int i = 0; i < n; ++i) s.total += a[i * n + s.row_to_col[i]];
  return s;
}

}  // namespace

MatchResult hungarian_assign(const Matrix<double>& cost) {
  const int rows = cost.rows(), cols = cost.cols();
  double max_abs = 0;
  for (double c : cost.span()) {
    if (!std::isfinite(c)) {
      throw std::invalid_argument("hungarian_assign: non-finite cost");
    }
    max_abs = std::max(max_abs, std::abs(c));
  }
  MatchResult result;
  if (rows == 0 || cols == 0) {
    for (int i = 0; i < rows; ++i) result.unmatched_queries.push_back(i);
    return result;
  }
  const int n = std::max(rows, cols);
  // Padding entries are zero: a real row assigned to a padding column is
  // unmatched.
  std::vector<double> base(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) base[i * n + j] = cost(i, j);
  }
  const double forbid = (2.0 * max_abs + 1.0) * (n + 1);
  const double tol = 1e-9 * (1.0 + max_abs * n);

  Solution best = solve_square(base, n);
  const double optimum = best.total;
  std::vector<double> work = base;

  // Lexicographic tie-break: walk rows in order and pin each to the
  // smallest column that still admits an optimal completion. Only edges
  // that are tight under the current optimal potentials can appear in an
  // optimal assignment.
  for (int i = 0; i < rows; ++i) {
    const int current = best.row_to_col[i];
    const int current_key = current < cols ? current : cols;  // unmatched last
    int chosen = current;
    for (int j = 0; j < cols && j < current_key; ++j) {
      if (work[i * n + j] >= forbid) continue;
      const double reduced = work[i * n + j] - best.u[i] - best.v[j];
      if (std::abs(reduced) > tol) continue;
      std::vector<double> trial = work;
      for (int jj = 0; jj < n; ++jj) {
        if (jj != j) trial[i * n + jj] = forbid;
      }
      for (int ii = 0; ii < n; ++ii) {
        if (ii != i) trial[ii * n + j] = forbid;
      }
      Solution s = solve_square(trial, n);
      if (std::abs(s.total - optimum) <= tol) {
        chosen = j;
        best = std::move(s);
        work = std::move(trial);
        break;
      }
    }
    if (chosen == current) {
      // Pin the current choice so later rows cannot disturb it.
      for (int jj = 0; jj < n; ++jj) {
        if (jj != chosen) work[i * n + jj] = forbid;
      }
      if (chosen < cols) {
        for (int ii = 0; ii < n; ++ii) {
          if (ii != i) work[ii * n + chosen] = forbid;
        }
      }
      // Raising costs keeps the potentials feasible and `best` optimal.
    }
  }

  for (int i = 0; i < rows; ++i) {
    const int j = best.row_to_col[i];
    if (j < cols) {
      result.pairs.emplace_back(i, j);
    } else {
      result.unmatched_queries.push_back(i);
    }
  }
  return result;
}

double assignment_cost(const Matrix<double>& cost, const MatchResult& m) {
  double total = 0;
  for (const auto& [i, j] : m.pairs) total += cost(i, j);
  return total;
}

template <typename T>
LossResult<T> matched_loss(const BoxPredictionSet<T>& preds,
                           const std::vector<GroundTruthBox>& gts,
                           const MatchResult& match, const LossWeights& w) {
  const int n = preds.size();
  std::vector<int> targets(n, -1);
  for (const auto& [qi, gj] : match.pairs) {
    if (qi < 0 || qi >= n || gj < 0 || gj >= static_cast<int>(gts.size())) {
      throw std::invalid_argument("matched_loss: pair out of range");
    }
    targets[qi] = gts[gj].class_id;
  }
  const T normalizer = static_cast<T>(std::max<std::size_t>(1, match.pairs.size()));
  auto cls = ag::focal_loss(preds.logits, targets, static_cast<T>(w.focal_alpha),
                            static_cast<T>(w.focal_gamma), normalizer);
  auto reg = ag::l1_pairs(preds.decoded, box_targets<T>(gts), match.pairs);
  LossResult<T> r;
  r.total = ag::weighted_sum<T>({static_cast<T>(w.w_reg), static_cast<T>(w.w_cls)},
                                {reg, cls});
  r.breakdown.reg = ag::scalar(reg);
  r.breakdown.cls = ag::scalar(cls);
  r.breakdown.total = ag::scalar(r.total);
  r.breakdown.matched = static_cast<int>(match.pairs.size());
  r.match = match;
  return r;
}

template <typename T>
LossResult<T> set_loss(const BoxPredictionSet<T>& preds,
                       const std::vector<GroundTruthBox>& gts,
                       const LossWeights& w) {
  return matched_loss(preds, gts, hungarian_assign(pairwise_cost(preds, gts, w)), w);
}

template <typename T>
MoadLoss<T> moad_loss(const MoadOutput<T>& out,
                      const std::vector<GroundTruthBox>& gts,
                      const LossWeights& w,
                      const std::map<Branch, MatchResult>* frozen) {
  const Branch order[3] = {Branch::kLC, Branch::kL, Branch::kC};
  const double weights[3] = {w.w_lc, w.w_l, w.w_c};
  MoadLoss<T> result;
  std::vector<ag::Var<T>> terms;
  std::vector<T> coeffs;
  for (int b = 0; b < 3; ++b) {
    auto it = out.find(order[b]);
    if (it == out.end()) {
      throw std::invalid_argument("moad_loss: missing branch " + to_string(order[b]));
    }
    const auto& preds = it->second.predictions;
    LossResult<T> r;
    if (frozen != nullptr) {
      r = matched_loss(preds, gts, frozen->at(order[b]), w);
    } else {
      r = set_loss(preds, gts, w);
    }
    result.branches[order[b]] = r.breakdown;
    result.matches[order[b]] = r.match;
    terms.push_back(r.total);
    coeffs.push_back(static_cast<T>(weights[b]));
  }
  result.total = ag::weighted_sum(coeffs, terms);
  return result;
}

template Matrix<float> box_targets<float>(const std::vector<GroundTruthBox>&);
template Matrix<double> box_targets<double>(const std::vector<GroundTruthBox>&);
template Matrix<double> pairwise_cost<float>(const BoxPredictionSet<float>&,
                                             const std::vector<GroundTruthBox>&,
                                             const LossWeights&);
template Matrix<double> pairwise_cost<double>(const BoxPredictionSet<double>&,
                                              const std::vector<GroundTruthBox>&,
                                              const LossWeights&);
template LossResult<float> matched_loss<float>(const BoxPredictionSet<float>&,
                                               const std::vector<GroundTruthBox>&,
                                               const MatchResult&, const LossWeights&);
template LossResult<double> matched_loss<double>(const BoxPredictionSet<double>&,
                                                 const std::vector<GroundTruthBox>&,
                                                 const MatchResult&, const LossWeights&);
template LossResult<float> set_loss<float>(const BoxPredictionSet<float>&,
                                           const std::vector<GroundTruthBox>&,
                                           const LossWeights&);
template LossResult<double> set_loss<double>(const BoxPredictionSet<double>&,
                                             const std::vector<GroundTruthBox>&,
                                             const LossWeights&);
template MoadLoss<float> moad_loss<float>(const MoadOutput<float>&,
                                          const std::vector<GroundTruthBox>&,
                                          const LossWeights&,
                                          const std::map<Branch, MatchResult>*);
template MoadLoss<double> moad_loss<double>(const MoadOutput<double>&,
                                            const std::vector<GroundTruthBox>&,
                                            const LossWeights&,
                                            const std::map<Branch, MatchResult>*);

}  // namespace modfuse
