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

// End-to-end finite-difference checks of the detector losses with the
// assignments frozen, in double precision.

#include <map>
#include <random>
#include <string>

#include <gtest/gtest.h>
#include "modfuse/dataset.hpp"
#include "modfuse/matching.hpp"
#include "modfuse/model.hpp"
#include "test_util.hpp"

namespace modfuse {
namespace {

using testing::check_gradients;
using testing::tiny_config;

constexpr double kTol = 1e-4;

std::map<std::string, ag::Var<double>> Select(const Detector<double>& model, bool pme) {
  std::map<std::string, ag::Var<double>> out;
  for (const auto& [name, p] : model.params().all()) {
    if (is_pme_parameter(name) == pme) out.emplace(name, p);
  }
  return out;
}

TEST(GradCheckTest, ThreeBranchLossWithFrozenAssignments) {
  const auto cfg = tiny_config();
  Detector<double> model(cfg);
  // Zero query content makes the first self-attention output constant,
  // which leaves its layer norm too curved for central differences.
  std::mt19937_64 rng(5);
  model.params().get("query.content")->value =
      testing::random_matrix<double>(cfg.model.n_queries, cfg.model.d_model, rng);
  const auto rec = make_record(cfg, 1, "train", 0.0);
  ASSERT_EQ(rec.scene.boxes.size(), 3u);
  ASSERT_EQ(cfg.model.n_queries, 6);
  const auto first = model.forward_moad(&rec.geo, &rec.sem, MoadMode::kTrain);
  const auto matches = moad_loss(first, rec.scene.boxes, cfg.loss).matches;
  const auto leaves = Select(model, false);
  const auto r = check_gradients(leaves, [&] {
    const auto out = model.forward_moad(&rec.geo, &rec.sem, MoadMode::kTrain);
    return moad_loss(out, rec.scene.boxes, cfg.loss, &matches).total;
  });
  EXPECT_GT(r.checked, 1000);
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

TEST(GradCheckTest, EnsembleLossWithFrozenAssignment) {
  const auto cfg = tiny_config();
  Detector<double> model(cfg);
  const auto rec = make_record(cfg, 2, "train", 0.0);
  // Move alpha away from zero so the proximity term is exercised.
  model.pme().alpha()->value(0, 0) = -0.3;
  const auto moad = model.forward_moad(&rec.geo, &rec.sem, MoadMode::kTrain);
  const auto first = model.forward_pme(moad, true);
  const auto match = set_loss(first.predictions, rec.scene.boxes, cfg.loss).match;
  const auto leaves = Select(model, true);
  ASSERT_TRUE(leaves.count("pme.alpha"));
  const auto r = check_gradients(leaves, [&] {
    const auto out = model.forward_pme(moad, true);
    return matched_loss(out.predictions, rec.scene.boxes, match, cfg.loss).total;
  });
  EXPECT_GT(r.checked, 100);
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

}  // namespace
}  // namespace modfuse
