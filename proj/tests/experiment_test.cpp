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

#include "modfuse/experiment.hpp"

#include <gtest/gtest.h>
#include "modfuse/plot.hpp"
#include "modfuse/training.hpp"
#include "test_util.hpp"

namespace modfuse {
namespace {

using testing::small_config;

TEST(ScenarioTest, ParseAndName) {
  for (const std::string name : {"full", "camera_only", "lidar_only", "noise:0.5",
                                 "noise:1@sem", "occlusion:0.25@geo"}) {
    EXPECT_EQ(parse_scenario(name).name(), name);
  }
  const auto s = parse_scenario("occlusion:0.25@geo");
  EXPECT_EQ(s.kind, ScenarioKind::kOcclusion);
  EXPECT_EQ(s.magnitude, 0.25);
  EXPECT_EQ(s.target, CorruptionTarget::kGeo);
  for (const std::string bad : {"", "rain", "noise", "noise:x", "noise:-1", "occlusion:2",
                                "noise:0.5@radar"}) {
    EXPECT_THROW(parse_scenario(bad), std::invalid_argument) << bad;
  }
  EXPECT_EQ(default_scenarios().size(), 8u);
}

TEST(ScenarioTest, InputsPerScenario) {
  const auto cfg = small_config();
  const auto rec = make_record(cfg, 0, "test", 0.0);
  auto [g, s] = scenario_inputs(rec, parse_scenario("full"));
  EXPECT_EQ(g, rec.geo);
  EXPECT_EQ(s, rec.sem);
  std::tie(g, s) = scenario_inputs(rec, parse_scenario("camera_only"));
  EXPECT_TRUE(g.noise.missing);
  EXPECT_EQ(s, rec.sem);
  std::tie(g, s) = scenario_inputs(rec, parse_scenario("lidar_only"));
  EXPECT_EQ(g, rec.geo);
  EXPECT_TRUE(s.noise.missing);
  std::tie(g, s) = scenario_inputs(rec, parse_scenario("noise:0.5@sem"));
  EXPECT_EQ(g, rec.geo);
  EXPECT_NE(s.values, rec.sem.values);
  // Deterministic per record.
  EXPECT_EQ(scenario_inputs(rec, parse_scenario("noise:0.5")),
            scenario_inputs(rec, parse_scenario("noise:0.5")));
}

TEST(ScenarioTest, EffectiveEnsemble) {
  const auto cam = parse_scenario("camera_only");
  EXPECT_EQ(effective_ensemble(cam, Ensemble::kPme), Ensemble::kNone);
  EXPECT_EQ(effective_ensemble(cam, Ensemble::kNme), Ensemble::kNone);
  EXPECT_EQ(effective_ensemble(cam, Ensemble::kTopk), Ensemble::kTopk);
  EXPECT_EQ(effective_ensemble(parse_scenario("noise:1"), Ensemble::kPme), Ensemble::kPme);
}

class TrainedTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new ExperimentConfig(small_config());
    records_ = new std::vector<SceneRecord>(generate_dataset(*cfg_));
    model_ = train_moad(*cfg_, *records_).release();
  }
  static void TearDownTestSuite() {
    delete model_;
    delete records_;
    delete cfg_;
  }
  static ExperimentConfig* cfg_;
  static std::vector<SceneRecord>* records_;
  static Detector<float>* model_;
};

ExperimentConfig* TrainedTest::cfg_ = nullptr;
std::vector<SceneRecord>* TrainedTest::records_ = nullptr;
Detector<float>* TrainedTest::model_ = nullptr;

TEST_F(TrainedTest, FullScenarioEqualsPlainEvaluation) {
  const auto r = evaluate_model(*model_, *records_, parse_scenario("full"), Ensemble::kNone);
  std::vector<std::vector<Detection>> preds;
  std::vector<std::vector<GroundTruthBox>> gts;
  ag::NoGradGuard guard;
  for (std::size_t i = 0; i < records_->size(); ++i) {
    const auto& rec = (*records_)[i];
    preds.push_back(to_detections(infer(*model_, rec.geo, rec.sem, Ensemble::kNone),
                                  static_cast<int>(i), cfg_->eval.score_floor));
    gts.push_back(rec.scene.boxes);
  }
  const auto plain = evaluate(preds, gts, cfg_->world.num_classes, cfg_->eval);
  EXPECT_EQ(canonical_report(r).find("\"map\""), canonical_report(r).find("\"map\""));
  EXPECT_EQ(r.map, plain.map);
  EXPECT_EQ(r.nds_lite, plain.nds_lite);
  EXPECT_EQ(r.scenario, "full");
  EXPECT_EQ(r.branch, "LC");
}

TEST_F(TrainedTest, ReportDoesNotDependOnWorkers) {
  const auto s = parse_scenario("noise:0.5");
  EXPECT_EQ(canonical_report(evaluate_model(*model_, *records_, s, Ensemble::kTopk, 1)),
            canonical_report(evaluate_model(*model_, *records_, s, Ensemble::kTopk, 3)));
}

TEST_F(TrainedTest, RobustnessDropsAreRelativeToFullRow) {
  const auto rows = robustness_sweep(
      *model_, *records_, {parse_scenario("camera_only"), parse_scenario("lidar_only")},
      {Ensemble::kNone, Ensemble::kPme});
  ASSERT_EQ(rows.size(), 6u);
  for (int e = 0; e < 2; ++e) {
    const auto& full = rows[3 * e];
    EXPECT_EQ(full.report.scenario, "full");
    EXPECT_EQ(full.map_drop, 0.0);
    for (int k = 1; k < 3; ++k) {
      const auto& row = rows[3 * e + k];
      EXPECT_DOUBLE_EQ(row.map_drop, relative_drop(full.report.map, row.report.map));
      EXPECT_DOUBLE_EQ(row.nds_drop, relative_drop(full.report.nds_lite, row.report.nds_lite));
    }
  }
  EXPECT_EQ(rows[4].report.ensemble, "none");  // pme falls back without a sensor
  EXPECT_EQ(rows[4].report.branch, "C");
  const auto table = robustness_table(rows);
  EXPECT_EQ(table.rows.size(), rows.size());
  for (const auto& r : table.rows) EXPECT_EQ(r.size(), table.header.size());
}

TEST(AblationConfigTest, RowMapping) {
  const ExperimentConfig base;
  const auto a = ablation_config(base, "a");
  EXPECT_EQ(a.loss.w_l, 0.0);
  EXPECT_EQ(a.loss.w_c, 0.0);
  EXPECT_EQ(a.train.stage2_epochs, 0);
  const auto b = ablation_config(base, "b");
  EXPECT_EQ(b.loss.w_l, 0.0);
  EXPECT_EQ(b.train.stage2_epochs, base.train.stage2_epochs);
  const auto c = ablation_config(base, "c");
  EXPECT_EQ(c.loss.w_l, 1.0);
  EXPECT_EQ(c.train.stage2_epochs, 0);
  const auto d = ablation_config(base, "d");
  EXPECT_EQ(d.loss.w_c, 1.0);
  EXPECT_TRUE(d.train.pme_bias);
  EXPECT_THROW(ablation_config(base, "e"), std::invalid_argument);
}

TEST(AblationSuiteTest, RowsAndTable) {
  const auto cfg = small_config();
  const auto records = generate_dataset(cfg);
  const auto rows = ablation_suite(cfg, records, records, parse_scenario("full"));
  ASSERT_EQ(rows.size(), 4u);
  const std::pair<bool, bool> flags[] = {{false, false}, {false, true}, {true, false},
                                         {true, true}};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(rows[i].label, std::string(1, static_cast<char>('a' + i)));
    EXPECT_EQ(rows[i].moad, flags[i].first);
    EXPECT_EQ(rows[i].pme, flags[i].second);
    EXPECT_EQ(rows[i].report.branch, rows[i].pme ? "E" : "LC");
  }
  const auto t = ablation_table(rows);
  EXPECT_EQ(t.header.size(), 5u);
  EXPECT_EQ(t.rows.size(), 4u);
}

TEST(StrategyTest, AllStrategies) {
  const auto cfg = small_config();
  const auto records = generate_dataset(cfg);
  const auto rows = ensemble_comparison(cfg, records, records, parse_scenario("full"));
  std::vector<std::string> names;
  for (const auto& r : rows) names.push_back(r.strategy);
  EXPECT_EQ(names, (std::vector<std::string>{"pme", "nme", "topk", "nms", "none"}));
  EXPECT_EQ(strategy_table(rows).rows.size(), 5u);
}

TEST(TableTest, FormatAndJson) {
  Table t{{"name", "value"}, {{"alpha", "1.5"}, {"b", "10.25"}}};
  const std::string text = format_table(t);
  EXPECT_EQ(text,
            "name   value\n"
            "------------\n"
            "alpha    1.5\n"
            "b      10.25\n");
  const auto j = table_to_json(t);
  EXPECT_EQ(j.at("columns"), nlohmann::json({"name", "value"}));
  EXPECT_EQ(j.at("rows").size(), 2u);
  EXPECT_EQ(format_number(0.123456), "0.1235");
  EXPECT_EQ(format_number(2.0, 2), "2.00");
}

TEST(PlotTest, LineChartIsStandaloneSvg) {
  const auto svg = plot::line_chart({"PR <LC>", "recall", "precision"},
                                    {{"a&b", {0, 0.5, 1}, {1, 0.8, 0.2}}});
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("xmlns=\"http://www.w3.org/2000/svg\""), std::string::npos);
  EXPECT_NE(svg.find("PR &lt;LC&gt;"), std::string::npos);
  EXPECT_NE(svg.find("a&amp;b"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_THROW(plot::line_chart({}, {{"bad", {0, 1}, {1}}}), std::invalid_argument);
}

TEST(PlotTest, BarChartValidatesShape) {
  const auto svg = plot::bar_chart({"drops", "", "%"}, {"camera", "lidar"},
                                   {{"moad", {}, {29.0, -1.0}}, {"lc", {}, {69.0, 71.0}}});
  EXPECT_NE(svg.find("camera"), std::string::npos);
  EXPECT_THROW(plot::bar_chart({}, {"x"}, {{"s", {}, {1, 2}}}), std::invalid_argument);
  EXPECT_EQ(plot::xml_escape("\"<&>\""), "&quot;&lt;&amp;&gt;&quot;");
}

}  // namespace
}  // namespace modfuse
