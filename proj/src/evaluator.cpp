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
#include <limits>
#include <stdexcept>
#include <tuple>

namespace modfuse {

template <typename T>
std::vector<Detection> to_detections(const BoxPredictionSet<T>& preds, int scene,
                                     double score_floor) {
  const auto& lg = preds.logits->value;
  const auto& dec = preds.decoded->value;
  std::vector<Detection> out;
  for (int i = 0; i < lg.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < lg.cols(); ++c) {
      if (lg(i, c) > lg(i, best)) best = c;
    }
    Detection d;
    d.scene = scene;
    d.x = dec(i, 0);
    d.y = dec(i, 1);
    d.w = std::exp(static_cast<double>(dec(i, 2)));
    d.l = std::exp(static_cast<double>(dec(i, 3)));
    d.class_id = best;
    d.score = 1.0 / (1.0 + std::exp(-static_cast<double>(lg(i, best))));
    if (d.score >= score_floor) out.push_back(d);
  }
  return out;
}

bool ranks_before(const Detection& a, const Detection& b) {
  return std::make_tuple(-a.score, a.scene, a.x, a.y, a.w, a.l) <
         std::make_tuple(-b.score, b.scene, b.x, b.y, b.w, b.l);
}

DistanceMatch match_by_distance(const std::vector<Detection>& dets,
                                const std::vector<GroundTruthBox>& gts,
                                const std::vector<int>& gt_scene,
                                double threshold) {
  if (gt_scene.size() != gts.size()) {
    throw std::invalid_argument("match_by_distance: gt_scene size mismatch");
  }
  DistanceMatch m;
  m.tp.assign(dets.size(), false);
  m.gt_index.assign(dets.size(), -1);
  m.center_error.assign(dets.size(), 0.0);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_j = -1;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j] || gt_scene[j] != dets[i].scene) continue;
      const double d = std::hypot(dets[i].x - gts[j].x, dets[i].y - gts[j].y);
      if (d < best) {
        best = d;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0 && best < threshold) {
      taken[best_j] = true;
      m.tp[i] = true;
      m.gt_index[i] = best_j;
      m.center_error[i] = best;
    }
  }
  return m;
}

std::vector<double> interpolated_precision(const std::vector<bool>& tp, int num_gt) {
  std::vector<double> out(101, 0.0);
  if (num_gt <= 0) return out;
  std::vector<double> prec, rec;
  int ctp = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i]) ++ctp;
    prec.push_back(static_cast<double>(ctp) / static_cast<double>(i + 1));
    rec.push_back(static_cast<double>(ctp) / num_gt);
  }
  // Precision envelope: max precision at any recall >= r.
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = 0;
    for (std::size_t i = 0; i < prec.size(); ++i) {
      if (rec[i] >= r - 1e-12) best = std::max(best, prec[i]);
    }
    out[k] = best;
  }
  return out;
}

std::optional<double> average_precision(const std::vector<bool>& tp, int num_gt) {
  if (num_gt <= 0) return std::nullopt;
  const auto p = interpolated_precision(tp, num_gt);
  double sum = 0;
  for (double v : p) sum += v;
  return sum / 101.0;
}

double scale_error(double w1, double l1, double w2, double l2) {
  const double inter = std::min(w1, w2) * std::min(l1, l2);
  const double uni = w1 * l1 + w2 * l2 - inter;
  return uni > 0 ? 1.0 - inter / uni : 0.0;
}

double nds_lite(double map, double mate, double mase) {
  return (5.0 * map + (1.0 - std::min(1.0, mate / kAteCap)) +
          (1.0 - std::min(1.0, mase))) / 7.0;
}

double relative_drop(double full, double scenario) {
  return full == 0.0 ? 0.0 : (full - scenario) / full;
}

EvalReport evaluate(const std::vector<std::vector<Detection>>& preds,
                    const std::vector<std::vector<GroundTruthBox>>& gts,
                    int num_classes, const EvalConfig& cfg) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("evaluate: prediction/ground-truth scene count mismatch");
  }
  for (std::size_t t = 1; t < cfg.distance_thresholds.size(); ++t) {
    if (!(cfg.distance_thresholds[t] > cfg.distance_thresholds[t - 1])) {
      throw std::invalid_argument("evaluate: thresholds must be strictly increasing");
    }
  }
  EvalReport r;
  r.thresholds = cfg.distance_thresholds;
  r.num_scenes = static_cast<int>(preds.size());
  double ap_sum = 0, ate_sum = 0, ase_sum = 0;
  int ap_count = 0, tp_classes = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<Detection> dets;
    std::vector<GroundTruthBox> cls_gts;
    std::vector<int> gt_scene;
    for (std::size_t s = 0; s < preds.size(); ++s) {
      for (const auto& d : preds[s]) {
        if (d.class_id == c) {
          dets.push_back(d);
          dets.back().scene = static_cast<int>(s);
        }
      }
      for (const auto& g : gts[s]) {
        if (g.class_id == c) {
          cls_gts.push_back(g);
          gt_scene.push_back(static_cast<int>(s));
        }
      }
    }
    std::sort(dets.begin(), dets.end(), ranks_before);
    r.num_detections += static_cast<int>(dets.size());
    ClassMetrics cm;
    cm.class_id = c;
    cm.num_gt = static_cast<int>(cls_gts.size());
    for (double th : cfg.distance_thresholds) {
      const auto m = match_by_distance(dets, cls_gts, gt_scene, th);
      const auto ap = average_precision(m.tp, cm.num_gt);
      cm.ap.push_back(ap);
      if (ap) {
        ap_sum += *ap;
        ++ap_count;
      }
    }
    const auto m = match_by_distance(dets, cls_gts, gt_scene, cfg.tp_threshold);
    cm.precision_curve = interpolated_precision(m.tp, cm.num_gt);
    if (cm.num_gt > 0) {
      double te = 0, se = 0;
      int n = 0;
      for (std::size_t i = 0; i < dets.size(); ++i) {
        if (!m.tp[i]) continue;
        const auto& g = cls_gts[m.gt_index[i]];
        te += m.center_error[i];
        se += scale_error(dets[i].w, dets[i].l, g.w, g.l);
        ++n;
      }
      cm.ate = n > 0 ? te / n : kAteCap;
      cm.ase = n > 0 ? se / n : 1.0;
      ate_sum += *cm.ate;
      ase_sum += *cm.ase;
      ++tp_classes;
    }
    r.classes.push_back(std::move(cm));
  }
  r.map = ap_count > 0 ? ap_sum / ap_count : 0.0;
  r.mate = tp_classes > 0 ? ate_sum / tp_classes : kAteCap;
  r.mase = tp_classes > 0 ? ase_sum / tp_classes : 1.0;
  r.nds_lite = nds_lite(r.map, r.mate, r.mase);
  return r;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["scenario"] = r.scenario;
  j["ensemble"] = r.ensemble;
  j["branch"] = r.branch;
  j["thresholds"] = r.thresholds;
  j["map"] = r.map;
  j["mate"] = r.mate;
  j["mase"] = r.mase;
  j["nds_lite"] = r.nds_lite;
  j["num_scenes"] = r.num_scenes;
  j["num_detections"] = r.num_detections;
  j["classes"] = nlohmann::json::array();
  for (const auto& c : r.classes) {
    nlohmann::json cj;
    cj["class_id"] = c.class_id;
    cj["num_gt"] = c.num_gt;
    cj["ap"] = nlohmann::json::array();
    for (const auto& a : c.ap) cj["ap"].push_back(opt(a));
    cj["ate"] = opt(c.ate);
    cj["ase"] = opt(c.ase);
    cj["precision_curve"] = c.precision_curve;
    j["classes"].push_back(cj);
  }
  j["metadata"] = r.metadata;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kReportSchemaVersion) {
    throw std::runtime_error("eval report: unsupported schema_version " +
                             std::to_string(version));
  }
  EvalReport r;
  r.scenario = j.at("scenario").get<std::string>();
  r.ensemble = j.at("ensemble").get<std::string>();
  r.branch = j.at("branch").get<std::string>();
  r.thresholds = j.at("thresholds").get<std::vector<double>>();
  r.map = j.at("map").get<double>();
  r.mate = j.at("mate").get<double>();
  r.mase = j.at("mase").get<double>();
  r.nds_lite = j.at("nds_lite").get<double>();
  r.num_scenes = j.at("num_scenes").get<int>();
  r.num_detections = j.at("num_detections").get<int>();
  for (const auto& cj : j.at("classes")) {
    ClassMetrics c;
    c.class_id = cj.at("class_id").get<int>();
    c.num_gt = cj.at("num_gt").get<int>();
    for (const auto& a : cj.at("ap")) c.ap.push_back(opt_from(a));
    c.ate = opt_from(cj.at("ate"));
    c.ase = opt_from(cj.at("ase"));
    c.precision_curve = cj.at("precision_curve").get<std::vector<double>>();
    r.classes.push_back(std::move(c));
  }
  if (j.contains("metadata")) r.metadata = j.at("metadata");
  return r;
}

std::string canonical_report(const EvalReport& r) {
  auto j = to_json(r);
  j.erase("metadata");
  return j.dump();
}

template std::vector<Detection> to_detections<float>(const BoxPredictionSet<float>&, int,
                                                     double);
template std::vector<Detection> to_detections<double>(const BoxPredictionSet<double>&, int,
                                                      double);

}  // namespace modfuse
