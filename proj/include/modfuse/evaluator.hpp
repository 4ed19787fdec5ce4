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

// Center-distance detection metrics in the style of the nuScenes
// detection benchmark.
//
// Per class and distance threshold, detections from all scenes are ranked
// by score and greedily matched to the nearest unmatched ground truth of
// the same scene whose center distance is strictly below the threshold.
// AP is 101-point interpolated precision. Classes without ground truth are
// left out of the mean.
//
// True-positive errors are measured at `tp_threshold`:
//   ATE  center distance in meters
//   ASE  1 - IoU of the two size rectangles aligned at a common center
// A class with ground truth but no true positive scores ATE = 4 and ASE = 1.
//
//   nds_lite = (5 mAP + (1 - min(1, mATE / 4)) + (1 - min(1, mASE))) / 7

#ifndef MODFUSE_EVALUATOR_HPP_
#define MODFUSE_EVALUATOR_HPP_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "modfuse/config.hpp"
#include "modfuse/decoder.hpp"
#include "modfuse/world.hpp"

namespace modfuse {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr double kAteCap = 4.0;

struct Detection {
  int scene = 0;
  double x = 0, y = 0;
  double w = 1, l = 1;
  int class_id = 0;
  double score = 0;
};

// One detection per query: argmax class, sigmoid score. Queries scoring
// below `score_floor` are dropped.
template <typename T>
std::vector<Detection> to_detections(const BoxPredictionSet<T>& preds, int scene,
                                     double score_floor);

// Deterministic ranking: score descending, then scene, x, y, w, l.
bool ranks_before(const Detection& a, const Detection& b);

struct DistanceMatch {
  std::vector<bool> tp;                // per detection, in input order
  std::vector<int> gt_index;           // matched gt or -1
  std::vector<double> center_error;    // meters, per detection (TP only)
};

// `dets` must already be ranked. Ground truths are matched only within the
// detection's scene; `gt_scene[j]` is the scene of gts[j].
DistanceMatch match_by_distance(const std::vector<Detection>& dets,
                                const std::vector<GroundTruthBox>& gts,
                                const std::vector<int>& gt_scene,
                                double threshold);

// 101-point interpolated AP of a ranked TP/FP list. Returns nullopt when
// there is no ground truth.
std::optional<double> average_precision(const std::vector<bool>& tp, int num_gt);

// Interpolated precision at recalls 0, 0.01, ..., 1.
std::vector<double> interpolated_precision(const std::vector<bool>& tp, int num_gt);

// 1 - IoU of two (w, l) rectangles sharing a center.
double scale_error(double w1, double l1, double w2, double l2);

struct ClassMetrics {
  int class_id = 0;
  int num_gt = 0;
  std::vector<std::optional<double>> ap;  // per threshold
  std::optional<double> ate;
  std::optional<double> ase;
  std::vector<double> precision_curve;  // at tp_threshold
};

struct EvalReport {
  std::string scenario = "full";
  std::string ensemble = "none";
  std::string branch;
  std::vector<double> thresholds;
  std::vector<ClassMetrics> classes;
  double map = 0;
  double mate = kAteCap;
  double mase = 1;
  double nds_lite = 0;
  int num_scenes = 0;
  int num_detections = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

double nds_lite(double map, double mate, double mase);

// preds[s] and gts[s] belong to scene s.
EvalReport evaluate(const std::vector<std::vector<Detection>>& preds,
                    const std::vector<std::vector<GroundTruthBox>>& gts,
                    int num_classes, const EvalConfig& cfg);

// (full - scenario) / full; 0 when full is 0.
double relative_drop(double full, double scenario);

// JSON with schema_version; the timestamp lives under metadata.
nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

// Serialization with metadata removed, for comparing reports.
std::string canonical_report(const EvalReport& r);

}  // namespace modfuse

#endif  // MODFUSE_EVALUATOR_HPP_
