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

// Experiment runners on top of the detector: test-time scenarios, the
// robustness sweep, the four-row ablation suite and the ensemble-strategy
// comparison.
//
// Scenario names:
//   full, camera_only, lidar_only
//   noise:<sigma>[@geo|@sem]      additive Gaussian noise (default both)
//   occlusion:<frac>[@geo|@sem]   occlusion patch covering frac of the view

#ifndef MODFUSE_EXPERIMENT_HPP_
#define MODFUSE_EXPERIMENT_HPP_

#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "modfuse/config.hpp"
#include "modfuse/dataset.hpp"
#include "modfuse/evaluator.hpp"
#include "modfuse/model.hpp"
#include "modfuse/world.hpp"

namespace modfuse {

enum class ScenarioKind { kFull, kCameraOnly, kLidarOnly, kNoise, kOcclusion };

struct Scenario {
  ScenarioKind kind = ScenarioKind::kFull;
  double magnitude = 0;
  CorruptionTarget target = CorruptionTarget::kBoth;

  std::string name() const;
  bool missing_modality() const {
    return kind == ScenarioKind::kCameraOnly || kind == ScenarioKind::kLidarOnly;
  }
};

// Throws std::invalid_argument on malformed names.
Scenario parse_scenario(const std::string& name);

// full, camera_only, lidar_only, noise at 0.25 / 0.5 / 1, occlusion at
// 0.25 / 0.5.
std::vector<Scenario> default_scenarios();

// The two grids the detector sees for a record under a scenario. Corruption
// seeds derive from the record's own seeds.
std::pair<SensorGrid, SensorGrid> scenario_inputs(const SceneRecord& rec,
                                                  const Scenario& scenario);

// Ensemble actually used for a scenario: pme and nme fall back to none
// when a modality is missing.
Ensemble effective_ensemble(const Scenario& scenario, Ensemble requested);

// Runs inference on every record and evaluates against its ground truth.
// `workers` > 1 runs scenes in parallel; the report does not depend on it.
EvalReport evaluate_model(const Detector<float>& model,
                          const std::vector<SceneRecord>& records,
                          const Scenario& scenario, Ensemble ensemble,
                          int workers = 1);

struct RobustnessRow {
  EvalReport report;
  double map_drop = 0;  // relative to the full row of the same ensemble
  double nds_drop = 0;
};

// Every (ensemble, scenario) pair, ensembles outermost. The full scenario is
// the drop reference; when not listed it is added as each ensemble's first
// row.
std::vector<RobustnessRow> robustness_sweep(const Detector<float>& model,
                                            const std::vector<SceneRecord>& records,
                                            const std::vector<Scenario>& scenarios,
                                            const std::vector<Ensemble>& ensembles,
                                            int workers = 1);

// ---- training helpers ----

// Fresh detector trained through stage 1.
std::unique_ptr<Detector<float>> train_moad(const ExperimentConfig& cfg,
                                            const std::vector<SceneRecord>& train,
                                            std::ostream* log = nullptr);

// Copy of `base` with stage 2 run on top (bias on or off).
std::unique_ptr<Detector<float>> train_ensemble(const Detector<float>& base,
                                                const std::vector<SceneRecord>& train,
                                                bool use_bias,
                                                std::ostream* log = nullptr);

// Deep copy through a checkpoint, under a possibly different config.
std::unique_ptr<Detector<float>> clone_detector(const Detector<float>& model,
                                                const ExperimentConfig& cfg);

// ---- ablation ----

struct AblationRow {
  std::string label;  // "a" .. "d"
  bool moad = false;
  bool pme = false;
  EvalReport report;
};

// Config for an ablation row: rows a and b train the fused branch only
// (w_L = w_C = 0); rows b and d add the ensemble stage.
ExperimentConfig ablation_config(const ExperimentConfig& base, const std::string& label);

// Trains two stage-1 models (a/c) and their ensembles (b/d) and evaluates
// every row on `eval` under `scenario`. Rows without the ensemble use the
// fused branch.
std::vector<AblationRow> ablation_suite(const ExperimentConfig& base,
                                        const std::vector<SceneRecord>& train,
                                        const std::vector<SceneRecord>& eval,
                                        const Scenario& scenario,
                                        std::ostream* log = nullptr,
                                        int workers = 1);

// ---- ensemble strategies ----

struct StrategyRow {
  std::string strategy;  // pme, nme, topk, nms, none
  EvalReport report;
};

// One MOAD model with PME and NME stages trained on top; evaluates pme,
// nme, topk, nms and none.
std::vector<StrategyRow> ensemble_comparison(const ExperimentConfig& cfg,
                                             const std::vector<SceneRecord>& train,
                                             const std::vector<SceneRecord>& eval,
                                             const Scenario& scenario,
                                             std::ostream* log = nullptr,
                                             int workers = 1);

// ---- tables ----

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Columns padded to their widest cell; numbers right-aligned.
std::string format_table(const Table& t);
nlohmann::json table_to_json(const Table& t);

Table robustness_table(const std::vector<RobustnessRow>& rows);
Table ablation_table(const std::vector<AblationRow>& rows);
Table strategy_table(const std::vector<StrategyRow>& rows);

std::string format_number(double v, int precision = 4);

}  // namespace modfuse

#endif  // MODFUSE_EXPERIMENT_HPP_
