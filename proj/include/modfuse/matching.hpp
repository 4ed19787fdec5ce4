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

// Set-prediction supervision: bipartite matching between predicted and
// ground-truth boxes, focal classification loss and L1 box regression.
//
// Boxes are compared in the decoded frame (x, y, log w, log l). The
// matching cost of prediction i against ground truth j is
//
//   w_reg * mean_d |b_i,d - g_j,d| + w_cls * alpha (1 - p)^gamma (-log p)
//
// where p is the sigmoid score of class(j) for prediction i.

#ifndef MODFUSE_MATCHING_HPP_
#define MODFUSE_MATCHING_HPP_

#include <map>
#include <utility>
#include <vector>

#include "modfuse/autograd.hpp"
#include "modfuse/config.hpp"
#include "modfuse/decoder.hpp"
#include "modfuse/world.hpp"

namespace modfuse {

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (query, gt), sorted by query
  std::vector<int> unmatched_queries;
};

// G x 4 regression targets (x, y, log w, log l).
template <typename T>
Matrix<T> box_targets(const std::vector<GroundTruthBox>& gts);

// N x G matching costs. Empty (N x 0) when there are no ground truths.
template <typename T>
Matrix<double> pairwise_cost(const BoxPredictionSet<T>& preds,
                             const std::vector<GroundTruthBox>& gts,
                             const LossWeights& w);

// Minimum-cost assignment of min(N, G) pairs. Among optimal assignments the
// one whose query-sorted pair list is lexicographically smallest wins.
// Throws std::invalid_argument on non-finite costs.
MatchResult hungarian_assign(const Matrix<double>& cost);

// Sum of the assigned costs.
double assignment_cost(const Matrix<double>& cost, const MatchResult& m);

struct BranchLoss {
  double total = 0;
  double reg = 0;
  double cls = 0;
  int matched = 0;
};

template <typename T>
struct LossResult {
  ag::Var<T> total;
  BranchLoss breakdown;
  MatchResult match;
};

// Loss of one prediction set under a fixed assignment.
template <typename T>
LossResult<T> matched_loss(const BoxPredictionSet<T>& preds,
                           const std::vector<GroundTruthBox>& gts,
                           const MatchResult& match, const LossWeights& w);

// Matches and scores one prediction set.
template <typename T>
LossResult<T> set_loss(const BoxPredictionSet<T>& preds,
                       const std::vector<GroundTruthBox>& gts,
                       const LossWeights& w);

template <typename T>
struct MoadLoss {
  ag::Var<T> total;
  std::map<Branch, BranchLoss> branches;
  std::map<Branch, MatchResult> matches;
};

// w_LC * L_LC + w_L * L_L + w_C * L_C, each branch matched on its own.
// Throws std::invalid_argument if a branch is missing. When `frozen` is
// given its assignments are used instead of matching.
template <typename T>
MoadLoss<T> moad_loss(const MoadOutput<T>& out,
                      const std::vector<GroundTruthBox>& gts,
                      const LossWeights& w,
                      const std::map<Branch, MatchResult>* frozen = nullptr);

}  // namespace modfuse

#endif  // MODFUSE_MATCHING_HPP_
