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

#include <fstream>
#include <stdexcept>

namespace modfuse {
namespace {

using nlohmann::json;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

void check_keys(const json& patch, const json& reference,
                const std::string& prefix) {
  if (!patch.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.is_object() || !reference.contains(key)) {
      throw std::invalid_argument("config: unknown key '" + path + "'");
    }
    if (value.is_object()) check_keys(value, reference.at(key), path);
  }
}

void check_sensor(const SensorConfig& s, const std::string& name) {
  require(s.height > 0 && s.width > 0, name + " grid dims must be positive");
  require(s.num_cameras >= 1, name + ".num_cameras must be >= 1");
  require(s.blob_sigma_cells > 0, name + ".blob_sigma_cells must be > 0");
  require(s.noise_floor >= 0, name + ".noise_floor must be >= 0");
  require(s.class_confusion >= 0 && s.class_confusion <= 1,
          name + ".class_confusion must be in [0, 1]");
  require(s.class_shuffle_prob >= 0 && s.class_shuffle_prob <= 1,
          name + ".class_shuffle_prob must be in [0, 1]");
  require(s.position_jitter_cells >= 0 && s.size_noise >= 0,
          name + " noise magnitudes must be >= 0");
  require(s.occlusion_fraction >= 0 && s.occlusion_fraction <= 1,
          name + ".occlusion_fraction must be in [0, 1]");
}

}  // namespace

void ExperimentConfig::validate() const {
  require(world.x_max > world.x_min && world.y_max > world.y_min,
          "world extent must be positive");
  require(world.min_objects >= 0 && world.max_objects >= 0,
          "object counts must be >= 0");
  require(world.num_classes >= 2, "world.num_classes must be >= 2");
  require(static_cast<int>(world.class_sizes.size()) == world.num_classes,
          "world.class_sizes must have num_classes entries");
  for (const auto& s : world.class_sizes) {
    require(s[0] > 0 && s[1] > 0, "class sizes must be positive");
  }
  require(world.size_jitter >= 0 && world.size_jitter < 1,
          "world.size_jitter must be in [0, 1)");
  check_sensor(geo, "geo");
  check_sensor(sem, "sem");
  require(geo.num_cameras == 1, "geo.num_cameras must be 1");
  require(model.d_model > 0 && model.d_model % 4 == 0,
          "model.d_model must be a positive multiple of 4");
  require(model.heads > 0 && model.d_model % model.heads == 0,
          "model.d_model must be divisible by model.heads");
  require(model.pme_heads > 0 && model.d_model % model.pme_heads == 0,
          "model.d_model must be divisible by model.pme_heads");
  require(model.layers >= 1, "model.layers must be >= 1");
  require(model.n_queries >= 1, "model.n_queries must be >= 1");
  require(model.cls_prior > 0 && model.cls_prior < 1,
          "model.cls_prior must be in (0, 1)");
  for (double w : {loss.w_reg, loss.w_cls, loss.w_lc, loss.w_l, loss.w_c,
                   loss.focal_gamma, loss.focal_alpha}) {
    require(w >= 0, "loss weights must be >= 0");
  }
  require(train.stage1_epochs >= 0 && train.stage2_epochs >= 0,
          "epochs must be >= 0");
  require(train.augment_fraction >= 0 && train.augment_fraction <= 1,
          "train.augment_fraction must be in [0, 1]");
  require(train.batch_size >= 1, "train.batch_size must be >= 1");
  require(train.schedule_stage1 == "cyclic" ||
              train.schedule_stage1 == "cosine" ||
              train.schedule_stage1 == "constant",
          "train.schedule_stage1 must be cyclic, cosine or constant");
  require(train.schedule_stage2 == "cyclic" ||
              train.schedule_stage2 == "cosine" ||
              train.schedule_stage2 == "constant",
          "train.schedule_stage2 must be cyclic, cosine or constant");
  require(train.optimizer == "adamw", "train.optimizer must be adamw");
  require(!eval.distance_thresholds.empty(), "eval thresholds empty");
  for (std::size_t i = 1; i < eval.distance_thresholds.size(); ++i) {
    require(eval.distance_thresholds[i] > eval.distance_thresholds[i - 1],
            "eval.distance_thresholds must be strictly increasing");
  }
  require(environment.probability >= 0 && environment.probability <= 1,
          "environment.probability must be in [0, 1]");
  require(data.num_scenes >= 0, "data.num_scenes must be >= 0");
  require(data.train_fraction >= 0 && data.val_fraction >= 0 &&
              data.test_fraction >= 0 &&
              data.train_fraction + data.val_fraction + data.test_fraction <=
                  1.0 + 1e-9,
          "data split fractions must be >= 0 and sum to <= 1");
}

ExperimentConfig config_from_json(const json& patch) {
  json full = ExperimentConfig{};
  check_keys(patch, full, "");
  full.merge_patch(patch);
  ExperimentConfig cfg = full.get<ExperimentConfig>();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json patch;
  try {
    patch = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  return config_from_json(patch);
}

void apply_overrides(ExperimentConfig& cfg,
                     const std::vector<std::string>& overrides) {
  json full = cfg;
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("config: override '" + ov +
                                  "' is not of the form key=value");
    }
    const std::string key = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &full;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (!node->is_object() || !node->contains(part)) {
        throw std::invalid_argument("config: unknown key '" + key + "'");
      }
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *node = value;
  }
  cfg = full.get<ExperimentConfig>();
  cfg.validate();
}

}  // namespace modfuse
