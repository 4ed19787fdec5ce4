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

// Experiment configuration. Every field is addressable in the JSON config
// file by its dotted path (e.g. "train.stage1_epochs") and can be
// overridden from the command line with --set path=value.

#ifndef MODFUSE_CONFIG_HPP_
#define MODFUSE_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace modfuse {

struct WorldConfig {
  double x_min = -16.0;
  double x_max = 16.0;
  double y_min = -16.0;
  double y_max = 16.0;
  int min_objects = 2;
  int max_objects = 8;
  double min_separation = 3.0;  // meters between box centers
  int num_classes = 3;
  // Nominal (w, l) per class; sizes are scaled by 1 +- size_jitter.
  std::vector<std::array<double, 2>> class_sizes = {
      {1.9, 4.6}, {0.7, 0.7}, {0.8, 1.9}};
  double size_jitter = 0.1;
  int max_retries = 1000;
};

struct SensorConfig {
  int height = 16;  // per camera for the semantic view
  int width = 16;
  int num_cameras = 1;  // semantic view only
  double blob_sigma_cells = 0.7;
  double noise_floor = 0.02;
  // Class-channel degradation: label smoothing towards uniform plus a
  // probability of reporting a uniformly drawn wrong class.
  double class_confusion = 0.0;
  double class_shuffle_prob = 0.0;
  double position_jitter_cells = 0.0;  // isotropic Gaussian sigma
  double size_noise = 0.0;             // relative Gaussian noise on sizes
  double occlusion_fraction = 0.0;     // fraction of columns zeroed
};

inline SensorConfig default_geo_sensor() {
  SensorConfig s;
  s.class_confusion = 0.7;
  s.class_shuffle_prob = 0.3;
  return s;
}

inline SensorConfig default_sem_sensor() {
  SensorConfig s;
  s.position_jitter_cells = 0.4;
  s.size_noise = 0.15;
  return s;
}

struct ModelConfig {
  int d_model = 64;
  int heads = 4;
  int layers = 6;
  int ffn_hidden = 128;
  int n_queries = 30;
  int pme_heads = 1;
  double pe_min_wavelength = 2.0;    // meters
  double pe_max_wavelength = 128.0;  // meters
  double cls_prior = 0.01;
  double alpha_init = -0.5;
  double beta_init = 0.0;
  std::uint64_t init_seed = 1;
};

struct LossWeights {
  double w_reg = 2.0;
  double w_cls = 0.25;
  double w_lc = 1.0;
  double w_l = 1.0;
  double w_c = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
};

struct TrainConfig {
  int stage1_epochs = 20;
  int stage2_epochs = 6;
  double augment_fraction = 0.75;
  int paste_max = 3;
  int batch_size = 8;
  double lr_stage1 = 1e-4;
  double lr_stage2 = 1e-4;
  std::string schedule_stage1 = "cyclic";
  std::string schedule_stage2 = "cosine";
  int warmup_steps = 1000;
  std::string optimizer = "adamw";
  double weight_decay = 0.01;
  double grad_clip = 10.0;  // global norm; <= 0 disables
  bool pme_bias = true;     // false trains the NME variant
  std::uint64_t seed = 0;
};

struct EvalConfig {
  std::vector<double> distance_thresholds = {0.5, 1.0, 2.0, 4.0};
  double tp_threshold = 2.0;  // threshold for translation/scale errors
  double score_floor = 0.0;
  double nms_distance = 2.0;
  int topk = 0;  // 0 means n_queries
};

// Per-scene "environment" corruptions drawn at data generation time.
struct EnvironmentConfig {
  double probability = 0.3;
  double sem_noise = 0.5;
  double sem_occlusion = 0.5;
  double sem_jitter_cells = 2.0;
  double geo_noise = 0.5;
  double geo_dropout = 0.5;  // occlusion-patch fraction on the geometric view
};

struct DataConfig {
  int num_scenes = 100;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  WorldConfig world;
  SensorConfig geo = default_geo_sensor();
  SensorConfig sem = default_sem_sensor();
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  EvalConfig eval;
  EnvironmentConfig environment;
  DataConfig data;

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WorldConfig, x_min, x_max, y_min,
                                                y_max, min_objects, max_objects,
                                                min_separation, num_classes,
                                                class_sizes, size_jitter,
                                                max_retries)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SensorConfig, height, width,
                                                num_cameras, blob_sigma_cells,
                                                noise_floor, class_confusion,
                                                class_shuffle_prob,
                                                position_jitter_cells,
                                                size_noise, occlusion_fraction)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, d_model, heads,
                                                layers, ffn_hidden, n_queries,
                                                pme_heads, pe_min_wavelength,
                                                pe_max_wavelength, cls_prior,
                                                alpha_init, beta_init,
                                                init_seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, w_reg, w_cls, w_lc,
                                                w_l, w_c, focal_gamma,
                                                focal_alpha)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    TrainConfig, stage1_epochs, stage2_epochs, augment_fraction, paste_max,
    batch_size, lr_stage1, lr_stage2, schedule_stage1, schedule_stage2,
    warmup_steps, optimizer, weight_decay, grad_clip, pme_bias, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalConfig, distance_thresholds,
                                                tp_threshold, score_floor,
                                                nms_distance, topk)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EnvironmentConfig, probability,
                                                sem_noise, sem_occlusion,
                                                sem_jitter_cells, geo_noise,
                                                geo_dropout)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DataConfig, num_scenes,
                                                train_fraction, val_fraction,
                                                test_fraction, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ExperimentConfig, world, geo,
                                                sem, model, loss, train, eval,
                                                environment, data)

// Layers `patch` over the defaults (JSON merge-patch semantics), rejecting
// keys that do not name a config field.
ExperimentConfig config_from_json(const nlohmann::json& patch);

// Reads a JSON config file; missing keys keep their defaults, unknown keys
// are rejected.
ExperimentConfig load_config(const std::string& path);

// Applies "a.b.c=value" overrides. The value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_overrides(ExperimentConfig& cfg,
                     const std::vector<std::string>& overrides);

}  // namespace modfuse

#endif  // MODFUSE_CONFIG_HPP_
