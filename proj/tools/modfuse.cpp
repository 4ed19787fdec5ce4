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

// modfuse command-line driver.
//
//   modfuse gen-data   --out DIR
//   modfuse train      --data DIR --stage {1,2,both} --out DIR
//   modfuse eval       --checkpoint FILE --data DIR --scenario S --ensemble E
//   modfuse ablate     --data DIR --out DIR
//   modfuse robustness --checkpoint FILE --data DIR --out DIR
//   modfuse plot       --report FILE... --out DIR
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "modfuse/config.hpp"
#include "modfuse/dataset.hpp"
#include "modfuse/evaluator.hpp"
#include "modfuse/experiment.hpp"
#include "modfuse/plot.hpp"
#include "modfuse/training.hpp"

namespace {

namespace fs = std::filesystem;
using modfuse::ExperimentConfig;

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  long long seed = -1;
  int workers = 1;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string stage = "both";
  std::string split = "test";
  std::vector<std::string> scenarios;
  std::vector<std::string> ensembles;
  std::vector<std::string> reports;
  bool corrupted = false;
};

std::string default_out() {
  const char* env = std::getenv("MODFUSE_OUT");
  return env != nullptr && *env != '\0' ? env : "out";
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

fs::path prepare_out(const Options& o) {
  const fs::path out = o.out.empty() ? fs::path(default_out()) : fs::path(o.out);
  fs::create_directories(out);
  return out;
}

// Config precedence: defaults < base (checkpoint) < --config < --set < --seed.
ExperimentConfig resolve_config(const Options& o, const ExperimentConfig* base = nullptr) {
  ExperimentConfig cfg = base != nullptr ? *base : ExperimentConfig{};
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw std::runtime_error("cannot open config " + o.config);
    nlohmann::json patch = nlohmann::json::parse(in);
    nlohmann::json merged = cfg;
    merged.merge_patch(patch);
    cfg = modfuse::config_from_json(merged);
  }
  modfuse::apply_overrides(cfg, o.overrides);
  if (o.seed >= 0) {
    cfg.data.seed = static_cast<std::uint64_t>(o.seed);
    cfg.train.seed = static_cast<std::uint64_t>(o.seed);
    cfg.model.init_seed = modfuse::mix_seed(static_cast<std::uint64_t>(o.seed), 1);
  }
  cfg.validate();
  return cfg;
}

std::vector<modfuse::SceneRecord> load_split(const Options& o, const ExperimentConfig& cfg,
                                             const std::string& split) {
  if (o.data.empty()) throw std::runtime_error("--data is required");
  if (!fs::exists(fs::path(o.data) / "index.jsonl")) {
    throw std::runtime_error("no dataset at " + o.data + " (run gen-data first)");
  }
  auto records = modfuse::select_split(modfuse::load_dataset(o.data, cfg), split);
  if (records.empty()) throw std::runtime_error("split '" + split + "' is empty in " + o.data);
  if (o.corrupted) records = modfuse::corrupted_copy(records, cfg);
  return records;
}

std::unique_ptr<modfuse::Detector<float>> load_model(const Options& o) {
  if (o.checkpoint.empty()) throw std::runtime_error("--checkpoint is required");
  const auto ckpt = modfuse::load_checkpoint(o.checkpoint);
  const ExperimentConfig cfg = resolve_config(o, &ckpt.config);
  auto model = std::make_unique<modfuse::Detector<float>>(cfg);
  modfuse::restore(*model, ckpt);
  return model;
}

void write_table(const fs::path& out, const std::string& stem, const modfuse::Table& t) {
  write_file(out / (stem + ".txt"), modfuse::format_table(t));
  write_file(out / (stem + ".json"), modfuse::table_to_json(t).dump(2) + "\n");
  std::cout << modfuse::format_table(t);
}

int gen_data(const Options& o) {
  const auto cfg = resolve_config(o);
  const fs::path out = prepare_out(o);
  const auto records = modfuse::generate_dataset(cfg, o.workers);
  modfuse::save_dataset(records, out.string());
  write_file(out / "config.json", nlohmann::json(cfg).dump(2) + "\n");
  const auto counts = modfuse::split_counts(cfg.data);
  std::cout << "wrote " << records.size() << " scenes (train " << counts.train << ", val "
            << counts.val << ", test " << counts.test << ") to " << out.string() << "\n";
  return 0;
}

int train(const Options& o) {
  const fs::path out = prepare_out(o);
  std::ofstream log(out / "train_log.jsonl", std::ios::trunc);
  if (o.stage == "2") {
    auto model = load_model(o);
    const auto records = load_split(o, model->config(), "train");
    const auto r2 = modfuse::train_stage2(*model, records, &log);
    modfuse::save_checkpoint(modfuse::make_checkpoint(*model, 2, r2.steps),
                             (out / "stage2.ckpt").string());
    std::cout << "wrote " << (out / "stage2.ckpt").string() << "\n";
    return 0;
  }
  const auto cfg = resolve_config(o);
  const auto records = load_split(o, cfg, "train");
  modfuse::Detector<float> model(cfg);
  const auto r1 = modfuse::train_stage1(model, records, &log);
  modfuse::save_checkpoint(modfuse::make_checkpoint(model, 1, r1.steps),
                           (out / "stage1.ckpt").string());
  std::cout << "wrote " << (out / "stage1.ckpt").string() << "\n";
  if (o.stage == "both") {
    const auto r2 = modfuse::train_stage2(model, records, &log);
    modfuse::save_checkpoint(modfuse::make_checkpoint(model, 2, r2.steps),
                             (out / "stage2.ckpt").string());
    std::cout << "wrote " << (out / "stage2.ckpt").string() << "\n";
  }
  return 0;
}

std::string single(const std::vector<std::string>& v, const std::string& fallback) {
  if (v.empty()) return fallback;
  if (v.size() > 1) throw CLI::ValidationError("expected a single value, got several");
  return v.front();
}

int eval(const Options& o) {
  const auto scenario = modfuse::parse_scenario(single(o.scenarios, "full"));
  const auto ensemble = modfuse::ensemble_from_string(single(o.ensembles, "none"));
  auto model = load_model(o);
  const auto records = load_split(o, model->config(), o.split);
  auto report = modfuse::evaluate_model(*model, records, scenario, ensemble, o.workers);
  report.metadata["timestamp"] = timestamp();
  report.metadata["checkpoint"] = o.checkpoint;
  report.metadata["split"] = o.split;
  report.metadata["corrupted"] = o.corrupted;
  const fs::path out = prepare_out(o);
  std::string stem = "report_" + scenario.name() + "_" + report.ensemble;
  for (char& c : stem) {
    if (c == ':' || c == '@') c = '_';
  }
  write_file(out / (stem + ".json"), modfuse::to_json(report).dump(2) + "\n");
  std::cout << "mAP " << modfuse::format_number(report.map) << "  NDS-lite "
            << modfuse::format_number(report.nds_lite) << "  -> " << (out / (stem + ".json")).string()
            << "\n";
  return 0;
}

int ablate(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto scenario = modfuse::parse_scenario(single(o.scenarios, "full"));
  Options clean = o;
  clean.corrupted = false;
  const auto train_set = load_split(clean, cfg, "train");
  const auto eval_set = load_split(o, cfg, o.split);
  const fs::path out = prepare_out(o);
  std::ofstream log(out / "train_log.jsonl", std::ios::trunc);
  const auto rows = modfuse::ablation_suite(cfg, train_set, eval_set, scenario, &log, o.workers);
  write_table(out, "ablation", modfuse::ablation_table(rows));
  std::vector<std::string> labels;
  modfuse::plot::Series map{"mAP", {}, {}}, nds{"NDS-lite", {}, {}};
  for (const auto& r : rows) {
    labels.push_back("(" + r.label + ")");
    map.y.push_back(r.report.map);
    nds.y.push_back(r.report.nds_lite);
  }
  write_file(out / "ablation.svg",
             modfuse::plot::bar_chart({"Ablation (" + scenario.name() + ")", "row", "score"},
                                      labels, {map, nds}));
  return 0;
}

int robustness(const Options& o) {
  auto model = load_model(o);
  std::vector<modfuse::Scenario> scenarios;
  if (o.scenarios.empty()) {
    scenarios = modfuse::default_scenarios();
  } else {
    for (const auto& s : o.scenarios) scenarios.push_back(modfuse::parse_scenario(s));
  }
  std::vector<modfuse::Ensemble> ensembles;
  for (const auto& e : o.ensembles.empty() ? std::vector<std::string>{"none", "pme"} : o.ensembles) {
    ensembles.push_back(modfuse::ensemble_from_string(e));
  }
  const auto records = load_split(o, model->config(), o.split);
  const auto rows = modfuse::robustness_sweep(*model, records, scenarios, ensembles, o.workers);
  const fs::path out = prepare_out(o);
  write_table(out, "robustness", modfuse::robustness_table(rows));

  std::vector<std::string> categories;
  std::vector<modfuse::plot::Series> series;
  for (std::size_t e = 0; e < ensembles.size(); ++e) {
    modfuse::plot::Series s{modfuse::to_string(ensembles[e]), {}, {}};
    const std::size_t per = rows.size() / ensembles.size();
    for (std::size_t k = 0; k < per; ++k) {
      const auto& r = rows[e * per + k];
      if (r.report.scenario == "full") continue;
      if (e == 0) categories.push_back(r.report.scenario);
      s.y.push_back(100.0 * r.map_drop);
    }
    series.push_back(std::move(s));
  }
  write_file(out / "robustness.svg",
             modfuse::plot::bar_chart({"Relative mAP drop per scenario", "scenario", "drop (%)"},
                                      categories, series));
  return 0;
}

int plot_reports(const Options& o) {
  if (o.reports.empty()) throw CLI::ValidationError("--report", "at least one report is required");
  const fs::path out = prepare_out(o);
  std::vector<std::string> names;
  modfuse::plot::Series map{"mAP", {}, {}}, nds{"NDS-lite", {}, {}};
  for (const auto& path : o.reports) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report " + path);
    const auto report = modfuse::report_from_json(nlohmann::json::parse(in));
    std::vector<modfuse::plot::Series> curves;
    for (const auto& c : report.classes) {
      if (c.precision_curve.empty()) continue;
      modfuse::plot::Series s{"class " + std::to_string(c.class_id), {}, c.precision_curve};
      for (std::size_t k = 0; k < c.precision_curve.size(); ++k) {
        s.x.push_back(static_cast<double>(k) / (c.precision_curve.size() - 1));
      }
      curves.push_back(std::move(s));
    }
    const std::string stem = fs::path(path).stem().string();
    write_file(out / ("pr_" + stem + ".svg"),
               modfuse::plot::line_chart({"Precision-recall: " + report.scenario + " / " +
                                              report.ensemble,
                                          "recall", "precision"},
                                         curves));
    names.push_back(stem);
    map.y.push_back(report.map);
    nds.y.push_back(report.nds_lite);
  }
  write_file(out / "summary.svg",
             modfuse::plot::bar_chart({"Report summary", "report", "score"}, names, {map, nds}));
  std::cout << "wrote " << o.reports.size() + 1 << " plots to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modfuse: modality-agnostic decoding and proximity-based ensembling on a "
               "synthetic BEV world"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config patch over the defaults");
    sub->add_option("--set", o.overrides, "override a config field, e.g. train.lr_stage1=1e-3");
    sub->add_option("--seed", o.seed,
                    "root seed: sets data.seed and train.seed, derives model.init_seed");
    sub->add_option("--workers", o.workers, "parallel workers for generation/evaluation")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output directory (default $MODFUSE_OUT or ./out)");
  };

  auto* gen = app.add_subcommand("gen-data", "generate and save a synthetic dataset");
  common(gen);

  auto* tr = app.add_subcommand("train", "train stage 1, stage 2 or both");
  common(tr);
  tr->add_option("--data", o.data, "dataset directory")->required();
  tr->add_option("--stage", o.stage, "which stages to run")
      ->check(CLI::IsMember({"1", "2", "both"}));
  tr->add_option("--checkpoint", o.checkpoint, "stage-1 checkpoint (required for --stage 2)");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint under one scenario");
  common(ev);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  ev->add_option("--data", o.data, "dataset directory")->required();
  ev->add_option("--split", o.split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--scenario", o.scenarios, "full, camera_only, lidar_only, noise:S, occlusion:F");
  ev->add_option("--ensemble", o.ensembles, "pme, nme, topk, nms or none");
  ev->add_flag("--corrupted", o.corrupted, "apply an environment corruption to every scene");

  auto* ab = app.add_subcommand("ablate", "train and evaluate the four ablation rows");
  common(ab);
  ab->add_option("--data", o.data, "dataset directory")->required();
  ab->add_option("--split", o.split, "evaluation split")
      ->check(CLI::IsMember({"train", "val", "test"}));
  ab->add_option("--scenario", o.scenarios, "evaluation scenario");
  ab->add_flag("--corrupted", o.corrupted, "evaluate on corrupted copies of the split");

  auto* rb = app.add_subcommand("robustness", "scenario sweep with relative drops");
  common(rb);
  rb->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  rb->add_option("--data", o.data, "dataset directory")->required();
  rb->add_option("--split", o.split, "evaluation split")
      ->check(CLI::IsMember({"train", "val", "test"}));
  rb->add_option("--scenario", o.scenarios, "scenarios (default: the standard sweep)");
  rb->add_option("--ensemble", o.ensembles, "ensembles (default: none pme)");

  auto* pl = app.add_subcommand("plot", "SVG figures from report files");
  common(pl);
  pl->add_option("--report", o.reports, "EvalReport JSON files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (o.stage == "2" && tr->parsed() && o.checkpoint.empty()) {
      throw CLI::ValidationError("--checkpoint", "--stage 2 needs a stage-1 checkpoint");
    }
    if (gen->parsed()) return gen_data(o);
    if (tr->parsed()) return train(o);
    if (ev->parsed()) return eval(o);
    if (ab->parsed()) return ablate(o);
    if (rb->parsed()) return robustness(o);
    if (pl->parsed()) return plot_reports(o);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}
