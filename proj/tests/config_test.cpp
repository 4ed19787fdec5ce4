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

#include "modfuse/config.hpp"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

namespace modfuse {
namespace {

TEST(ConfigTest, DefaultsValidate) {
  const ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.loss.w_reg, 2.0);
  EXPECT_EQ(cfg.loss.w_cls, 0.25);
  EXPECT_EQ(cfg.eval.distance_thresholds, (std::vector<double>{0.5, 1.0, 2.0, 4.0}));
  EXPECT_EQ(cfg.train.stage2_epochs, 6);
}

TEST(ConfigTest, JsonPatchKeepsDefaults) {
  const auto cfg = config_from_json({{"model", {{"d_model", 32}}}, {"train", {{"seed", 5}}}});
  EXPECT_EQ(cfg.model.d_model, 32);
  EXPECT_EQ(cfg.model.heads, ExperimentConfig{}.model.heads);
  EXPECT_EQ(cfg.train.seed, 5u);
}

TEST(ConfigTest, UnknownKeysAreRejected) {
  EXPECT_THROW(config_from_json({{"modle", {{"d_model", 32}}}}), std::invalid_argument);
  EXPECT_THROW(config_from_json({{"model", {{"dmodel", 32}}}}), std::invalid_argument);
}

TEST(ConfigTest, Overrides) {
  ExperimentConfig cfg;
  apply_overrides(cfg, {"train.lr_stage1=0.001", "train.schedule_stage1=cosine",
                        "loss.w_l=0", "eval.distance_thresholds=[1,2]", "train.pme_bias=false"});
  EXPECT_EQ(cfg.train.lr_stage1, 0.001);
  EXPECT_EQ(cfg.train.schedule_stage1, "cosine");
  EXPECT_EQ(cfg.loss.w_l, 0.0);
  EXPECT_EQ(cfg.eval.distance_thresholds, (std::vector<double>{1, 2}));
  EXPECT_FALSE(cfg.train.pme_bias);
  EXPECT_THROW(apply_overrides(cfg, {"train.nope=1"}), std::invalid_argument);
  EXPECT_THROW(apply_overrides(cfg, {"no_equals_sign"}), std::invalid_argument);
}

TEST(ConfigTest, ValidateRejectsBadValues) {
  auto bad = [](auto mutate) {
    ExperimentConfig cfg;
    mutate(cfg);
    return cfg;
  };
  EXPECT_THROW(bad([](auto& c) { c.model.d_model = 30; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.model.heads = 3; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.eval.distance_thresholds = {2, 1}; }).validate(),
               std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.data.train_fraction = 0.95; }).validate(),
               std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.train.schedule_stage1 = "step"; }).validate(),
               std::invalid_argument);
}

TEST(ConfigTest, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "modfuse_config_test.json";
  std::ofstream(path) << R"({"world": {"num_classes": 3}, "data": {"num_scenes": 40}})";
  EXPECT_EQ(load_config(path.string()).data.num_scenes, 40);
  std::ofstream(path, std::ios::trunc) << "{ not json";
  EXPECT_ANY_THROW(load_config(path.string()));
  std::filesystem::remove(path);
  EXPECT_ANY_THROW(load_config(path.string()));
}

TEST(ConfigTest, JsonRoundTrip) {
  ExperimentConfig cfg;
  cfg.model.n_queries = 17;
  const nlohmann::json j = cfg;
  EXPECT_EQ(nlohmann::json(config_from_json(j)), j);
}

}  // namespace
}  // namespace modfuse
