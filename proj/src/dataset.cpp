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

#include "modfuse/dataset.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace modfuse {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written in host order");

namespace {

using nlohmann::json;

enum SeedTag : std::uint64_t {
  kSceneTag = 0x5c,
  kGeoTag = 0x6e0,
  kSemTag = 0x5e3,
  kEnvTag = 0xe4,
};

}  // namespace

std::vector<CorruptionSpec> draw_environment(std::uint64_t seed,
                                             const EnvironmentConfig& env,
                                             double probability) {
  std::mt19937_64 rng(seed);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const int kind = std::uniform_int_distribution<int>(0, 4)(rng);
  const std::uint64_t spec_seed = rng();
  if (!(u < probability)) return {};
  CorruptionSpec s;
  s.seed = spec_seed;
  switch (kind) {
    case 0:
      s = {CorruptionKind::kAdditiveNoise, env.sem_noise, CorruptionTarget::kSem, spec_seed};
      break;
    case 1:
      s = {CorruptionKind::kOcclusionPatch, env.sem_occlusion, CorruptionTarget::kSem, spec_seed};
      break;
    case 2:
      s = {CorruptionKind::kPositionJitter, env.sem_jitter_cells, CorruptionTarget::kSem,
           spec_seed};
      break;
    case 3:
      s = {CorruptionKind::kAdditiveNoise, env.geo_noise, CorruptionTarget::kGeo, spec_seed};
      break;
    default:
      s = {CorruptionKind::kOcclusionPatch, env.geo_dropout, CorruptionTarget::kGeo, spec_seed};
      break;
  }
  return {s};
}

void render_record(SceneRecord& rec, const ExperimentConfig& cfg) {
  const int c = cfg.world.num_classes;
  rec.geo = render_geo_view(rec.scene, cfg.geo, c, rec.geo_seed);
  rec.sem = render_sem_view(rec.scene, cfg.sem, c, rec.sem_seed);
  for (const auto& spec : rec.environment) {
    if (spec.applies_to(Modality::kGeo)) rec.geo = apply_corruption(rec.geo, spec);
    if (spec.applies_to(Modality::kSem)) rec.sem = apply_corruption(rec.sem, spec);
  }
}

SceneRecord make_record(const ExperimentConfig& cfg, int index,
                        const std::string& split, double env_probability) {
  SceneRecord rec;
  rec.index = index;
  rec.split = split;
  const std::uint64_t base = mix_seed(cfg.data.seed, static_cast<std::uint64_t>(index));
  rec.scene = generate_scene(mix_seed(base, kSceneTag), cfg.world);
  rec.geo_seed = mix_seed(base, kGeoTag);
  rec.sem_seed = mix_seed(base, kSemTag);
  rec.environment_seed = mix_seed(base, kEnvTag);
  rec.environment = draw_environment(rec.environment_seed, cfg.environment, env_probability);
  render_record(rec, cfg);
  return rec;
}

SplitCounts split_counts(const DataConfig& data) {
  if (data.num_scenes < 0) throw std::invalid_argument("data.num_scenes < 0");
  SplitCounts s;
  s.train = static_cast<int>(std::lround(data.num_scenes * data.train_fraction));
  s.val = static_cast<int>(std::lround(data.num_scenes * data.val_fraction));
  s.train = std::min(s.train, data.num_scenes);
  s.val = std::min(s.val, data.num_scenes - s.train);
  s.test = data.num_scenes - s.train - s.val;
  return s;
}

std::vector<SceneRecord> make_records(const ExperimentConfig& cfg, int first,
                                      int count, const std::string& split,
                                      double env_probability, int workers) {
  std::vector<SceneRecord> out(std::max(count, 0));
  std::string error;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(workers, 1))
  for (int i = 0; i < count; ++i) {
    try {
      out[i] = make_record(cfg, first + i, split, env_probability);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error(error);
  return out;
}

std::vector<SceneRecord> generate_dataset(const ExperimentConfig& cfg, int workers) {
  const SplitCounts s = split_counts(cfg.data);
  const double p = cfg.environment.probability;
  auto all = make_records(cfg, 0, s.train, "train", p, workers);
  auto val = make_records(cfg, s.train, s.val, "val", p, workers);
  auto test = make_records(cfg, s.train + s.val, s.test, "test", p, workers);
  all.insert(all.end(), val.begin(), val.end());
  all.insert(all.end(), test.begin(), test.end());
  return all;
}

std::vector<SceneRecord> select_split(const std::vector<SceneRecord>& all,
                                      const std::string& split) {
  std::vector<SceneRecord> out;
  for (const auto& r : all) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

std::vector<SceneRecord> corrupted_copy(const std::vector<SceneRecord>& records,
                                        const ExperimentConfig& cfg) {
  std::vector<SceneRecord> out = records;
  for (auto& r : out) {
    r.environment = draw_environment(r.environment_seed, cfg.environment, 1.0);
    render_record(r, cfg);
  }
  return out;
}

std::vector<GroundTruthBox> box_bank(const std::vector<SceneRecord>& records) {
  std::vector<GroundTruthBox> bank;
  for (const auto& r : records) {
    bank.insert(bank.end(), r.scene.boxes.begin(), r.scene.boxes.end());
  }
  return bank;
}

namespace {

json spec_to_json(const CorruptionSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"magnitude", s.magnitude},
          {"target", to_string(s.target)},
          {"seed", s.seed}};
}

CorruptionSpec spec_from_json(const json& j) {
  CorruptionSpec s;
  s.kind = corruption_kind_from_string(j.at("kind").get<std::string>());
  s.magnitude = j.at("magnitude").get<double>();
  s.target = corruption_target_from_string(j.at("target").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

json grid_to_json(const SensorGrid& g, std::uint64_t offset) {
  json applied = json::array();
  for (const auto& s : g.noise.applied) applied.push_back(spec_to_json(s));
  return {{"modality", to_string(g.modality)},
          {"height", g.height},
          {"width", g.width},
          {"features", g.features},
          {"num_cameras", g.num_cameras},
          {"render_seed", g.noise.render_seed},
          {"missing", g.noise.missing},
          {"applied", applied},
          {"offset", offset},
          {"count", g.values.size()}};
}

}  // namespace

void save_dataset(const std::vector<SceneRecord>& records, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(std::filesystem::path(dir) / "index.jsonl", std::ios::binary);
  std::ofstream bin(std::filesystem::path(dir) / "tensors.bin", std::ios::binary);
  if (!index || !bin) throw std::runtime_error("dataset: cannot write to " + dir);
  std::uint64_t offset = 0;
  for (const auto& r : records) {
    json boxes = json::array();
    for (const auto& b : r.scene.boxes) {
      boxes.push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"l", b.l},
                       {"class_id", b.class_id}, {"yaw", b.yaw}});
    }
    json env = json::array();
    for (const auto& s : r.environment) env.push_back(spec_to_json(s));
    json j = {{"schema_version", kDatasetSchemaVersion},
              {"index", r.index},
              {"split", r.split},
              {"scene_seed", r.scene.seed},
              {"extent", {r.scene.extent.x_min, r.scene.extent.x_max,
                          r.scene.extent.y_min, r.scene.extent.y_max}},
              {"boxes", boxes},
              {"geo_seed", r.geo_seed},
              {"sem_seed", r.sem_seed},
              {"environment_seed", r.environment_seed},
              {"environment", env}};
    j["geo"] = grid_to_json(r.geo, offset);
    offset += r.geo.values.size() * sizeof(float);
    j["sem"] = grid_to_json(r.sem, offset);
    offset += r.sem.values.size() * sizeof(float);
    index << j.dump() << '\n';
    for (const auto* g : {&r.geo, &r.sem}) {
      bin.write(reinterpret_cast<const char*>(g->values.data()),
                static_cast<std::streamsize>(g->values.size() * sizeof(float)));
    }
  }
  if (!index || !bin) throw std::runtime_error("dataset: write failed in " + dir);
}

std::vector<SceneRecord> load_dataset(const std::string& dir,
                                      const ExperimentConfig& cfg) {
  const auto index_path = std::filesystem::path(dir) / "index.jsonl";
  const auto bin_path = std::filesystem::path(dir) / "tensors.bin";
  std::ifstream index(index_path);
  if (!index) throw std::runtime_error("dataset: missing " + index_path.string());
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("dataset: missing " + bin_path.string());
  bin.seekg(0, std::ios::end);
  const auto bin_size = static_cast<std::uint64_t>(bin.tellg());

  std::vector<SceneRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("dataset: index line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    if (j.value("schema_version", -1) != kDatasetSchemaVersion) {
      throw std::runtime_error("dataset: unsupported schema_version on line " +
                               std::to_string(line_no));
    }
    SceneRecord r;
    r.index = j.at("index").get<int>();
    r.split = j.at("split").get<std::string>();
    r.scene.seed = j.at("scene_seed").get<std::uint64_t>();
    const auto ext = j.at("extent").get<std::vector<double>>();
    r.scene.extent = {ext.at(0), ext.at(1), ext.at(2), ext.at(3)};
    for (const auto& b : j.at("boxes")) {
      r.scene.boxes.push_back({b.at("x").get<double>(), b.at("y").get<double>(),
                               b.at("w").get<double>(), b.at("l").get<double>(),
                               b.at("class_id").get<int>(), b.at("yaw").get<double>()});
    }
    r.geo_seed = j.at("geo_seed").get<std::uint64_t>();
    r.sem_seed = j.at("sem_seed").get<std::uint64_t>();
    r.environment_seed = j.at("environment_seed").get<std::uint64_t>();
    for (const auto& s : j.at("environment")) r.environment.push_back(spec_from_json(s));
    for (auto [key, grid] : {std::pair{"geo", &r.geo}, std::pair{"sem", &r.sem}}) {
      const json& g = j.at(key);
      grid->modality = modality_from_string(g.at("modality").get<std::string>());
      grid->height = g.at("height").get<int>();
      grid->width = g.at("width").get<int>();
      grid->features = g.at("features").get<int>();
      grid->num_cameras = g.at("num_cameras").get<int>();
      grid->noise.render_seed = g.at("render_seed").get<std::uint64_t>();
      grid->noise.missing = g.at("missing").get<bool>();
      for (const auto& s : g.at("applied")) grid->noise.applied.push_back(spec_from_json(s));
      const auto offset = g.at("offset").get<std::uint64_t>();
      const auto count = g.at("count").get<std::uint64_t>();
      if (count != static_cast<std::uint64_t>(grid->height) * grid->width * grid->features) {
        throw std::runtime_error("dataset: scene " + std::to_string(r.index) + " " + key +
                                 " size does not match its dims");
      }
      if (offset + count * sizeof(float) > bin_size) {
        throw std::runtime_error("dataset: tensors.bin truncated at scene " +
                                 std::to_string(r.index) + " " + key);
      }
      grid->values = Matrix<float>(grid->height * grid->width, grid->features);
      bin.seekg(static_cast<std::streamoff>(offset));
      bin.read(reinterpret_cast<char*>(grid->values.data()),
               static_cast<std::streamsize>(count * sizeof(float)));
      grid->cell_coords = make_cell_coords(r.scene.extent, grid->height, grid->width,
                                           grid->num_cameras);
    }
    if (r.geo.features != channel::count(cfg.world.num_classes)) {
      throw std::runtime_error("dataset: feature count does not match config");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace modfuse
