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

// Scene datasets: generation, per-scene environment corruptions, and the
// on-disk layout
//
//   <dir>/index.jsonl   one JSON record per scene
//   <dir>/tensors.bin   float32 little-endian grid values
//
// Scene i is fully determined by (data.seed, i) and the config.

#ifndef MODFUSE_DATASET_HPP_
#define MODFUSE_DATASET_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "modfuse/config.hpp"
#include "modfuse/world.hpp"

namespace modfuse {

inline constexpr int kDatasetSchemaVersion = 1;

struct SceneRecord {
  int index = 0;
  std::string split;
  Scene scene;
  std::uint64_t geo_seed = 0;
  std::uint64_t sem_seed = 0;
  std::uint64_t environment_seed = 0;
  std::vector<CorruptionSpec> environment;
  SensorGrid geo;
  SensorGrid sem;

  friend bool operator==(const SceneRecord&, const SceneRecord&) = default;
};

// With probability `probability` picks one of five degradations (semantic
// noise, semantic occlusion, semantic shift, geometric noise, geometric
// occlusion). The kind does not depend on the probability, so raising it to
// 1 only adds corruptions.
std::vector<CorruptionSpec> draw_environment(std::uint64_t seed,
                                             const EnvironmentConfig& env,
                                             double probability);

// Renders both views of a scene and applies the environment corruptions.
void render_record(SceneRecord& rec, const ExperimentConfig& cfg);

SceneRecord make_record(const ExperimentConfig& cfg, int index,
                        const std::string& split, double env_probability);

struct SplitCounts {
  int train = 0, val = 0, test = 0;
};

// Rounds train and val counts; test takes the remainder.
SplitCounts split_counts(const DataConfig& data);

// Scenes [first, first + count) of the given split. `workers` > 1
// generates in parallel; the result does not depend on it.
std::vector<SceneRecord> make_records(const ExperimentConfig& cfg, int first,
                                      int count, const std::string& split,
                                      double env_probability, int workers = 1);

// All splits with the configured environment probability.
std::vector<SceneRecord> generate_dataset(const ExperimentConfig& cfg,
                                          int workers = 1);

std::vector<SceneRecord> select_split(const std::vector<SceneRecord>& all,
                                      const std::string& split);

// Copies of the records with every scene corrupted (probability 1).
std::vector<SceneRecord> corrupted_copy(const std::vector<SceneRecord>& records,
                                        const ExperimentConfig& cfg);

// All ground-truth boxes of the records, in order (the paste bank).
std::vector<GroundTruthBox> box_bank(const std::vector<SceneRecord>& records);

void save_dataset(const std::vector<SceneRecord>& records,
                  const std::string& dir);
// Throws std::runtime_error on missing files, schema mismatches or
// truncated tensor data.
std::vector<SceneRecord> load_dataset(const std::string& dir,
                                      const ExperimentConfig& cfg);

}  // namespace modfuse

#endif  // MODFUSE_DATASET_HPP_
