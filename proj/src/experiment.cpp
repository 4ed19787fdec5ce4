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

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "modfuse/training.hpp"

namespace modfuse {

namespace {

constexpr std::uint64_t kScenarioTag = 0x5ce7a210;

std::string format_magnitude(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

double parse_magnitude(const std::string& text, const std::string& name) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(v >= 0)) {
    throw std::invalid_argument("scenario '" + name + "': bad magnitude '" + text + "'");
  }
  return v;
}

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size();
}

std::string branch_label(const Scenario& s, Ensemble e) {
  if (s.kind == ScenarioKind::kCameraOnly) return to_string(Branch::kC);
  if (s.kind == ScenarioKind::kLidarOnly) return to_string(Branch::kL);
  switch (e) {
    case Ensemble::kNone: return to_string(Branch::kLC);
    case Ensemble::kPme:
    case Ensemble::kNme: return to_string(Branch::kE);
    case Ensemble::kTopk:
    case Ensemble::kNms: return "pooled";
  }
  return "?";
}

}  // namespace

std::string Scenario::name() const {
  std::string base;
  switch (kind) {
    case ScenarioKind::kFull: return "full";
    case ScenarioKind::kCameraOnly: return "camera_only";
    case ScenarioKind::kLidarOnly: return "lidar_only";
    case ScenarioKind::kNoise: base = "noise:"; break;
    case ScenarioKind::kOcclusion: base = "occlusion:"; break;
  }
  base += format_magnitude(magnitude);
  if (target != CorruptionTarget::kBoth) base += "@" + to_string(target);
  return base;
}

Scenario parse_scenario(const std::string& name) {
  Scenario s;
  if (name == "full") return s;
  if (name == "camera_only") {
    s.kind = ScenarioKind::kCameraOnly;
    return s;
  }
  if (name == "lidar_only") {
    s.kind = ScenarioKind::kLidarOnly;
    return s;
  }
  const auto colon = name.find(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument(
        "unknown scenario '" + name +
        "' (expected full, camera_only, lidar_only, noise:<sigma> or occlusion:<frac>)");
  }
  const std::string kind = name.substr(0, colon);
  std::string rest = name.substr(colon + 1);
  const auto at = rest.find('@');
  if (at != std::string::npos) {
    s.target = corruption_target_from_string(rest.substr(at + 1));
    rest = rest.substr(0, at);
  }
  if (kind == "noise") {
    s.kind = ScenarioKind::kNoise;
  } else if (kind == "occlusion") {
    s.kind = ScenarioKind::kOcclusion;
  } else {
    throw std::invalid_argument("unknown scenario kind '" + kind + "' in '" + name + "'");
  }
  s.magnitude = parse_magnitude(rest, name);
  if (s.kind == ScenarioKind::kOcclusion && s.magnitude > 1) {
    throw std::invalid_argument("scenario '" + name + "': occlusion fraction above 1");
  }
  return s;
}

std::vector<Scenario> default_scenarios() {
  std::vector<Scenario> out;
  for (const char* n : {"full", "camera_only", "lidar_only", "noise:0.25", "noise:0.5",
                        "noise:1", "occlusion:0.25", "occlusion:0.5"}) {
    out.push_back(parse_scenario(n));
  }
  return out;
}

std::pair<SensorGrid, SensorGrid> scenario_inputs(const SceneRecord& rec,
                                                  const Scenario& scenario) {
  SensorGrid geo = rec.geo;
  SensorGrid sem = rec.sem;
  switch (scenario.kind) {
    case ScenarioKind::kFull: break;
    case ScenarioKind::kCameraOnly:
      geo = apply_corruption(
          geo, {CorruptionKind::kMissingModality, 0, CorruptionTarget::kGeo, 0});
      break;
    case ScenarioKind::kLidarOnly:
      sem = apply_corruption(
          sem, {CorruptionKind::kMissingModality, 0, CorruptionTarget::kSem, 0});
      break;
    case ScenarioKind::kNoise:
    case ScenarioKind::kOcclusion: {
      const CorruptionKind kind = scenario.kind == ScenarioKind::kNoise
                                      ? CorruptionKind::kAdditiveNoise
                                      : CorruptionKind::kOcclusionPatch;
      CorruptionSpec spec{kind, scenario.magnitude, scenario.target, 0};
      if (spec.applies_to(Modality::kGeo)) {
        spec.seed = mix_seed(rec.geo_seed, kScenarioTag);
        geo = apply_corruption(geo, spec);
      }
      if (spec.applies_to(Modality::kSem)) {
        spec.seed = mix_seed(rec.sem_seed, kScenarioTag);
        sem = apply_corruption(sem, spec);
      }
      break;
    }
  }
  return {std::move(geo), std::move(sem)};
}

Ensemble effective_ensemble(const Scenario& scenario, Ensemble requested) {
  if (scenario.missing_modality() &&
      (requested == Ensemble::kPme || requested == Ensemble::kNme)) {
    return Ensemble::kNone;
  }
  return requested;
}

EvalReport evaluate_model(const Detector<float>& model,
                          const std::vector<SceneRecord>& records,
                          const Scenario& scenario, Ensemble ensemble, int workers) {
  const Ensemble used = effective_ensemble(scenario, ensemble);
  const auto& cfg = model.config();
  const int n = static_cast<int>(records.size());
  std::vector<std::vector<Detection>> preds(n);
  std::vector<std::vector<GroundTruthBox>> gts(n);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
  for (int i = 0; i < n; ++i) {
    try {
      ag::NoGradGuard no_grad;
      const auto [geo, sem] = scenario_inputs(records[i], scenario);
      preds[i] = to_detections(infer(model, geo, sem, used), i, cfg.eval.score_floor);
      gts[i] = records[i].scene.boxes;
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  EvalReport r = evaluate(preds, gts, cfg.world.num_classes, cfg.eval);
  r.scenario = scenario.name();
  r.ensemble = to_string(used);
  r.branch = branch_label(scenario, used);
  return r;
}

std::vector<RobustnessRow> robustness_sweep(const Detector<float>& model,
                                            const std::vector<SceneRecord>& records,
                                            const std::vector<Scenario>& scenarios,
                                            const std::vector<Ensemble>& ensembles,
                                            int workers) {
  std::vector<Scenario> all = scenarios;
  const bool has_full = std::any_of(all.begin(), all.end(), [](const Scenario& s) {
    return s.kind == ScenarioKind::kFull;
  });
  if (!has_full) all.insert(all.begin(), Scenario{});
  std::vector<RobustnessRow> out;
  for (Ensemble e : ensembles) {
    const EvalReport full = evaluate_model(model, records, Scenario{}, e, workers);
    for (const auto& s : all) {
      RobustnessRow row;
      row.report = s.kind == ScenarioKind::kFull
                       ? full
                       : evaluate_model(model, records, s, e, workers);
      row.map_drop = relative_drop(full.map, row.report.map);
      row.nds_drop = relative_drop(full.nds_lite, row.report.nds_lite);
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::unique_ptr<Detector<float>> clone_detector(const Detector<float>& model,
                                                const ExperimentConfig& cfg) {
  auto copy = std::make_unique<Detector<float>>(cfg);
  restore(*copy, make_checkpoint(model, 0, 0));
  return copy;
}

std::unique_ptr<Detector<float>> train_moad(const ExperimentConfig& cfg,
                                            const std::vector<SceneRecord>& train,
                                            std::ostream* log) {
  auto model = std::make_unique<Detector<float>>(cfg);
  train_stage1(*model, train, log);
  return model;
}

std::unique_ptr<Detector<float>> train_ensemble(const Detector<float>& base,
                                                const std::vector<SceneRecord>& train,
                                                bool use_bias, std::ostream* log) {
  ExperimentConfig cfg = base.config();
  cfg.train.pme_bias = use_bias;
  auto model = clone_detector(base, cfg);
  train_stage2(*model, train, log);
  return model;
}

ExperimentConfig ablation_config(const ExperimentConfig& base, const std::string& label) {
  if (label != "a" && label != "b" && label != "c" && label != "d") {
    throw std::invalid_argument("unknown ablation row '" + label + "'");
  }
  ExperimentConfig cfg = base;
  if (label == "a" || label == "b") {
    cfg.loss.w_l = 0;
    cfg.loss.w_c = 0;
  }
  cfg.train.pme_bias = true;
  if (label == "a" || label == "c") cfg.train.stage2_epochs = 0;
  return cfg;
}

std::vector<AblationRow> ablation_suite(const ExperimentConfig& base,
                                        const std::vector<SceneRecord>& train,
                                        const std::vector<SceneRecord>& eval,
                                        const Scenario& scenario, std::ostream* log,
                                        int workers) {
  std::vector<AblationRow> rows;
  for (const char* pair : {"ab", "cd"}) {
    const std::string first(1, pair[0]), second(1, pair[1]);
    auto stage1 = train_moad(ablation_config(base, first), train, log);
    const ExperimentConfig with_pme = ablation_config(base, second);
    auto stage1_for_pme = clone_detector(*stage1, with_pme);
    auto ensemble = train_ensemble(*stage1_for_pme, train, true, log);
    rows.push_back({first, first == "c", false,
                    evaluate_model(*stage1, eval, scenario, Ensemble::kNone, workers)});
    rows.push_back({second, second == "d", true,
                    evaluate_model(*ensemble, eval, scenario, Ensemble::kPme, workers)});
  }
  return rows;
}

std::vector<StrategyRow> ensemble_comparison(const ExperimentConfig& cfg,
                                             const std::vector<SceneRecord>& train,
                                             const std::vector<SceneRecord>& eval,
                                             const Scenario& scenario, std::ostream* log,
                                             int workers) {
  auto base = train_moad(cfg, train, log);
  auto pme = train_ensemble(*base, train, true, log);
  auto nme = train_ensemble(*base, train, false, log);
  std::vector<StrategyRow> rows;
  rows.push_back({"pme", evaluate_model(*pme, eval, scenario, Ensemble::kPme, workers)});
  rows.push_back({"nme", evaluate_model(*nme, eval, scenario, Ensemble::kNme, workers)});
  rows.push_back({"topk", evaluate_model(*base, eval, scenario, Ensemble::kTopk, workers)});
  rows.push_back({"nms", evaluate_model(*base, eval, scenario, Ensemble::kNms, workers)});
  rows.push_back({"none", evaluate_model(*base, eval, scenario, Ensemble::kNone, workers)});
  return rows;
}

std::string format_number(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string format_table(const Table& t) {
  const std::size_t cols = t.header.size();
  std::vector<std::size_t> width(cols, 0);
  for (std::size_t c = 0; c < cols; ++c) width[c] = t.header[c].size();
  for (const auto& row : t.rows) {
    if (row.size() != cols) throw std::invalid_argument("format_table: ragged row");
    for (std::size_t c = 0; c < cols; ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& row, bool header) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::string& cell = row[c];
      const std::size_t pad = width[c] - cell.size();
      const bool right = !header && is_number(cell);
      if (c > 0) os << "  ";
      if (right) os << std::string(pad, ' ') << cell;
      else os << cell << (c + 1 < cols ? std::string(pad, ' ') : "");
    }
    os << "\n";
  };
  emit(t.header, true);
  std::size_t total = 0;
  for (std::size_t c = 0; c < cols; ++c) total += width[c] + (c > 0 ? 2 : 0);
  os << std::string(total, '-') << "\n";
  for (const auto& row : t.rows) emit(row, false);
  return os.str();
}

nlohmann::json table_to_json(const Table& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::object();
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      if (is_number(row[c])) r[t.header[c]] = std::stod(row[c]);
      else r[t.header[c]] = row[c];
    }
    rows.push_back(r);
  }
  return {{"columns", t.header}, {"rows", rows}};
}

Table robustness_table(const std::vector<RobustnessRow>& rows) {
  Table t{{"ensemble", "scenario", "branch", "mAP", "NDS-lite", "mAP drop %", "NDS drop %"},
          {}};
  for (const auto& r : rows) {
    t.rows.push_back({r.report.ensemble, r.report.scenario, r.report.branch,
                      format_number(r.report.map), format_number(r.report.nds_lite),
                      format_number(100.0 * r.map_drop, 2),
                      format_number(100.0 * r.nds_drop, 2)});
  }
  return t;
}

Table ablation_table(const std::vector<AblationRow>& rows) {
  Table t{{"row", "MOAD", "PME", "NDS-lite", "mAP"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back({"(" + r.label + ")", r.moad ? "yes" : "no", r.pme ? "yes" : "no",
                      format_number(r.report.nds_lite), format_number(r.report.map)});
  }
  return t;
}

Table strategy_table(const std::vector<StrategyRow>& rows) {
  Table t{{"strategy", "NDS-lite", "mAP"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back(
        {r.strategy, format_number(r.report.nds_lite), format_number(r.report.map)});
  }
  return t;
}

}  // namespace modfuse
