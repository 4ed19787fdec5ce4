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

#include "modfuse/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>
#include "oracles.hpp"

namespace modfuse {
namespace {

using testing::Det;
using testing::Gt;
using testing::MakeEvalInstance;
using testing::NaiveEvaluate;
using Preds = std::vector<std::vector<Detection>>;
using Gts = std::vector<std::vector<GroundTruthBox>>;

TEST(MatchByDistanceTest, PredictionAtCenterIsTruePositiveEverywhere) {
  for (double th : {0.5, 1.0, 2.0, 4.0}) {
    const auto m = match_by_distance({Det(0, 1, 2, 0, 0.9)}, {Gt(1, 2, 0)}, {0}, th);
    EXPECT_TRUE(m.tp[0]);
    EXPECT_EQ(m.center_error[0], 0.0);
  }
}

TEST(MatchByDistanceTest, ThreeMeterOffsetOnlyMatchesAtFourMeters) {
  const std::vector<Detection> dets = {Det(0, 3, 0, 0, 0.9)};
  const std::vector<GroundTruthBox> gts = {Gt(0, 0, 0)};
  EXPECT_FALSE(match_by_distance(dets, gts, {0}, 0.5).tp[0]);
  EXPECT_FALSE(match_by_distance(dets, gts, {0}, 1.0).tp[0]);
  EXPECT_FALSE(match_by_distance(dets, gts, {0}, 2.0).tp[0]);
  EXPECT_TRUE(match_by_distance(dets, gts, {0}, 4.0).tp[0]);

  const auto r = evaluate({dets}, {gts}, 1, EvalConfig{});
  ASSERT_EQ(r.classes[0].ap.size(), 4u);
  EXPECT_EQ(*r.classes[0].ap[0], 0.0);
  EXPECT_EQ(*r.classes[0].ap[1], 0.0);
  EXPECT_EQ(*r.classes[0].ap[2], 0.0);
  EXPECT_EQ(*r.classes[0].ap[3], 1.0);
}

TEST(MatchByDistanceTest, HigherConfidenceClaimsTheGroundTruth) {
  std::vector<Detection> dets = {Det(0, 0.2, 0, 0, 0.4), Det(0, 0.3, 0, 0, 0.8)};
  std::sort(dets.begin(), dets.end(), ranks_before);
  const auto m = match_by_distance(dets, {Gt(0, 0, 0)}, {0}, 1.0);
  EXPECT_EQ(dets[0].score, 0.8);
  EXPECT_TRUE(m.tp[0]);
  EXPECT_FALSE(m.tp[1]);
}

TEST(MatchByDistanceTest, GroundTruthOnlyMatchesWithinItsScene) {
  const auto m = match_by_distance({Det(1, 0, 0, 0, 0.9)}, {Gt(0, 0, 0)}, {0}, 4.0);
  EXPECT_FALSE(m.tp[0]);
}

TEST(AveragePrecisionTest, SimpleCases) {
  EXPECT_EQ(*average_precision({true}, 1), 1.0);
  EXPECT_EQ(*average_precision({}, 3), 0.0);
  EXPECT_FALSE(average_precision({true}, 0).has_value());
}

TEST(AveragePrecisionTest, HandWorkedThreePredictions) {
  
// TP, FP, TP against two gts: precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1.
  // Recall levels 0..0.5 see precision 1, levels 0.51..1 see 2/3.
  const double expected = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101.0;
  EXPECT_NEAR(*average_precision({true, false, true}, 2), expected, 1e-12);
}

TEST(EvaluateTest, PerfectPredictions) {
  Preds p = {{Det(0, 1, 1, 0, 0.9, 2, 4), Det(0, 5, 5, 1, 0.8, 1, 1)}, {Det(1, -3, 2, 1, 0.7)}};
  Gts g = {{Gt(1, 1, 0, 2, 4), Gt(5, 5, 1)}, {Gt(-3, 2, 1)}};
  const auto r = evaluate(p, g, 2, EvalConfig{});
  EXPECT_EQ(r.map, 1.0);
  EXPECT_EQ(r.mate, 0.0);
  EXPECT_EQ(r.mase, 0.0);
  EXPECT_EQ(r.nds_lite, 1.0);
}

TEST(EvaluateTest, EmptyPredictions) {
  const auto r = evaluate({{}, {}}, {{Gt(0, 0, 0)}, {Gt(1, 1, 1)}}, 2, EvalConfig{});
  EXPECT_EQ(r.map, 0.0);
  EXPECT_EQ(r.mate, kAteCap);
  EXPECT_EQ(r.mase, 1.0);
  EXPECT_EQ(r.nds_lite, 0.0);
}

TEST(EvaluateTest, ClassesWithoutGroundTruthAreExcluded) {
  const auto r = evaluate({{Det(0, 0, 0, 0, 0.9), Det(0, 4, 4, 1, 0.9)}}, {{Gt(0, 0, 0)}}, 2,
                          EvalConfig{});
  EXPECT_EQ(r.map, 1.0);
  EXPECT_FALSE(r.classes[1].ap[0].has_value());
}

TEST(EvaluateTest, RejectsNonIncreasingThresholds) {
  EvalConfig cfg;
  cfg.distance_thresholds = {1.0, 1.0};
  EXPECT_THROW(evaluate({}, {}, 1, cfg), std::invalid_argument);
  EXPECT_THROW(evaluate({{}}, {}, 1, EvalConfig{}), std::invalid_argument);
}

TEST(EvaluateTest, EqualsNaiveEvaluatorOnRandomInstances) {
  std::mt19937_64 rng(99);
  const EvalConfig cfg;
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = MakeEvalInstance(rng, 2);
    const auto r = evaluate(inst.preds, inst.gts, 2, cfg);
    const auto naive = NaiveEvaluate(inst.preds, inst.gts, 2, cfg);
    for (int c = 0; c < 2; ++c) {
      for (std::size_t t = 0; t < cfg.distance_thresholds.size(); ++t) {
        const double expected = naive.ap[c][t];
        if (expected < 0) {
          ASSERT_FALSE(r.classes[c].ap[t].has_value());
        } else {
          ASSERT_EQ(*r.classes[c].ap[t], expected) << "trial " << trial;
        }
      }
    }
    ASSERT_EQ(r.map, naive.map) << "trial " << trial;
    ASSERT_NEAR(r.mate, naive.mate, 1e-12) << "trial " << trial;
    ASSERT_NEAR(r.mase, naive.mase, 1e-12) << "trial " << trial;
    ASSERT_NEAR(r.nds_lite, naive.nds, 1e-12) << "trial " << trial;
  }
}

TEST(EvaluateTest, ApIsMonotoneInThreshold) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = MakeEvalInstance(rng, 2);
    const auto r = evaluate(inst.preds, inst.gts, 2, EvalConfig{});
    for (const auto& c : r.classes) {
      for (std::size_t t = 1; t < c.ap.size(); ++t) {
        if (c.ap[t]) ASSERT_GE(*c.ap[t], *c.ap[t - 1]);
      }
    }
  }
}

TEST(EvaluateTest, ScoreScaleInvariance) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = MakeEvalInstance(rng, 2);
    const auto r1 = evaluate(inst.preds, inst.gts, 2, EvalConfig{});
    for (auto& s : inst.preds) {
      for (auto& d : s) d.score *= 0.37;
    }
    const auto r2 = evaluate(inst.preds, inst.gts, 2, EvalConfig{});
    ASSERT_EQ(r1.map, r2.map);
    ASSERT_EQ(r1.mate, r2.mate);
    ASSERT_EQ(r1.mase, r2.mase);
  }
}

TEST(EvaluateTest, InvariantUnderPredictionReordering) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = MakeEvalInstance(rng, 2);
    const auto r1 = evaluate(inst.preds, inst.gts, 2, EvalConfig{});
    for (auto& s : inst.preds) std::shuffle(s.begin(), s.end(), rng);
    const auto r2 = evaluate(inst.preds, inst.gts, 2, EvalConfig{});
    ASSERT_EQ(canonical_report(r1), canonical_report(r2));
  }
}

TEST(EvaluateTest, ScaleErrorOfAlignedRectangles) {
  EXPECT_EQ(scale_error(2, 4, 2, 4), 0.0);
  // 1x2 inside 2x2: IoU = 2 / 4.
  EXPECT_DOUBLE_EQ(scale_error(1, 2, 2, 2), 0.5);
}

TEST(EvaluateTest, NdsLiteFormula) {
  EXPECT_DOUBLE_EQ(nds_lite(0.5, 2.0, 0.25), (2.5 + 0.5 + 0.75) / 7.0);
  EXPECT_DOUBLE_EQ(nds_lite(0.0, 10.0, 3.0), 0.0);
}

TEST(EvaluateTest, RelativeDropArithmetic) {
  EXPECT_DOUBLE_EQ(relative_drop(0.8, 0.6), 0.25);
  EXPECT_EQ(relative_drop(0.0, 0.3), 0.0);
  const double full = 0.613, cam = 0.217;
  EXPECT_NEAR(relative_drop(full, cam), (full - cam) / full, 1e-12);
}

TEST(EvalReportTest, JsonRoundTripAndCanonicalForm) {
  std::mt19937_64 rng(10);
  const auto inst = MakeEvalInstance(rng, 2);
  auto r = evaluate(inst.preds, inst.gts, 2, EvalConfig{});
  r.scenario = "camera_only";
  r.ensemble = "none";
  r.branch = "C";
  r.metadata["timestamp"] = "2026-01-01T00:00:00Z";
  const auto j = to_json(r);
  EXPECT_EQ(j.at("schema_version").get<int>(), kReportSchemaVersion);
  const auto back = report_from_json(j);
  EXPECT_EQ(to_json(back), j);
  auto other = r;
  other.metadata["timestamp"] = "2030-01-01T00:00:00Z";
  EXPECT_EQ(canonical_report(r), canonical_report(other));
  EXPECT_EQ(canonical_report(r).find("timestamp"), std::string::npos);
}

TEST(EvalReportTest, UnknownSchemaVersionIsRejected) {
  auto j = to_json(EvalReport{});
  j["schema_version"] = kReportSchemaVersion + 1;
  EXPECT_THROW(report_from_json(j), std::runtime_error);
}

TEST(ToDetectionsTest, ArgmaxClassSigmoidScoreAndFloor) {
  BoxPredictionSet<double> p;
  Matrix<double> dec(2, 4, 0.0), lg(2, 2, 0.0);
  dec(0, 0) = 1;
  dec(0, 2) = std::log(2.0);
  lg(0, 1) = 2.0;
  lg(1, 0) = -3.0;
  lg(1, 1) = -4.0;
  p.decoded = ag::constant(dec);
  p.boxes = ag::constant(dec);
  p.logits = ag::constant(lg);
  const auto all = to_detections(p, 3, 0.0);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].class_id, 1);
  EXPECT_EQ(all[0].scene, 3);
  EXPECT_NEAR(all[0].w, 2.0, 1e-12);
  EXPECT_NEAR(all[0].score, 1 / (1 + std::exp(-2.0)), 1e-12);
  EXPECT_EQ(all[1].class_id, 0);
  EXPECT_EQ(to_detections(p, 0, 0.5).size(), 1u);
}

}  // namespace
}  // namespace modfuse
