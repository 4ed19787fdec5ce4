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

#include "modfuse/model.hpp"

#include <gtest/gtest.h>
#include "modfuse/dataset.hpp"
#include "test_util.hpp"

namespace modfuse {
namespace {

SensorGrid Missing(const SensorGrid& g) {
  return apply_corruption(g, {CorruptionKind::kMissingModality, 0.0, CorruptionTarget::kBoth, 0});
}

class InferTest : public ::testing::Test {
 protected:
  InferTest() : cfg_(testing::tiny_config()), model_(cfg_) {
    rec_ = make_record(cfg_, 0, "test", 0.0);
  }
  ExperimentConfig cfg_;
  Detector<double> model_;
  SceneRecord rec_;
};

TEST_F(InferTest, NoEnsembleIsTheFusedBranch) {
  const auto p = infer(model_, rec_.geo, rec_.sem, Ensemble::kNone);
  const auto ref = model_.forward_moad(&rec_.geo, &rec_.sem, MoadMode::kTestLC);
  EXPECT_EQ(p.branch, Branch::kLC);
  EXPECT_EQ(p.decoded->value, ref.at(Branch::kLC).predictions.decoded->value);
  EXPECT_EQ(p.logits->value, ref.at(Branch::kLC).predictions.logits->value);
}

TEST_F(InferTest, MissingModalityUsesSurvivingBranch) {
  const auto cam = infer(model_, Missing(rec_.geo), rec_.sem, Ensemble::kNone);
  EXPECT_EQ(cam.branch, Branch::kC);
  const auto c_ref = model_.forward_moad(nullptr, &rec_.sem, MoadMode::kTestC);
  EXPECT_EQ(cam.decoded->value, c_ref.at(Branch::kC).predictions.decoded->value);

  const auto lidar = infer(model_, rec_.geo, Missing(rec_.sem), Ensemble::kTopk);
  EXPECT_EQ(lidar.branch, Branch::kL);
  const auto l_ref = model_.forward_moad(&rec_.geo, nullptr, MoadMode::kTestL);
  EXPECT_EQ(lidar.decoded->value, l_ref.at(Branch::kL).predictions.decoded->value);
}

TEST_F(InferTest, EnsembleHeadNeedsBothSensors) {
  EXPECT_THROW(infer(model_, Missing(rec_.geo), rec_.sem, Ensemble::kPme),
               std::invalid_argument);
  EXPECT_THROW(infer(model_, rec_.geo, Missing(rec_.sem), Ensemble::kNme),
               std::invalid_argument);
  EXPECT_THROW(infer(model_, Missing(rec_.geo), Missing(rec_.sem), Ensemble::kNone),
               std::invalid_argument);
}

TEST_F(InferTest, PmeMatchesTrainModeEnsemble) {
  const auto p = infer(model_, rec_.geo, rec_.sem, Ensemble::kPme);
  const auto moad = model_.forward_moad(&rec_.geo, &rec_.sem, MoadMode::kTrain);
  const auto ref = model_.forward_pme(moad, true);
  EXPECT_EQ(p.branch, Branch::kE);
  EXPECT_EQ(p.decoded->value, ref.predictions.decoded->value);
  const auto n = infer(model_, rec_.geo, rec_.sem, Ensemble::kNme);
  EXPECT_EQ(n.decoded->value, model_.forward_pme(moad, false).predictions.decoded->value);
}

TEST_F(InferTest, PooledBaselinesDrawFromAllBranches) {
  const auto topk = infer(model_, rec_.geo, rec_.sem, Ensemble::kTopk);
  EXPECT_EQ(topk.size(), cfg_.model.n_queries);
  const auto nms = infer(model_, rec_.geo, rec_.sem, Ensemble::kNms);
  EXPECT_GE(nms.size(), 1);
  EXPECT_LE(nms.size(), 3 * cfg_.model.n_queries);
}

TEST(EnsembleNamesTest, RoundTrip) {
  for (Ensemble e :
       {Ensemble::kPme, Ensemble::kNme, Ensemble::kTopk, Ensemble::kNms, Ensemble::kNone}) {
    EXPECT_EQ(ensemble_from_string(to_string(e)), e);
  }
  EXPECT_THROW(ensemble_from_string("vote"), std::invalid_argument);
}

TEST(InputModeTest, FromMissingFlags) {
  const auto cfg = testing::tiny_config();
  const auto rec = make_record(cfg, 0, "test", 0.0);
  EXPECT_EQ(input_mode(rec.geo, rec.sem), InputMode::kFull);
  EXPECT_EQ(input_mode(Missing(rec.geo), rec.sem), InputMode::kCameraOnly);
  EXPECT_EQ(input_mode(rec.geo, Missing(rec.sem)), InputMode::kLidarOnly);
  EXPECT_THROW(input_mode(Missing(rec.geo), Missing(rec.sem)), std::invalid_argument);
}

}  // namespace
}  // namespace modfuse
