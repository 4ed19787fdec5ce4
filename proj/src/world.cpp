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

#include "modfuse/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace modfuse {
namespace {

constexpr double kMinFootprint = 1e-4;
constexpr double kPlacementMargin = 1.0;  // meters kept clear of the border

struct Observation {
  double x, y, w, l;
  std::vector<double> class_vec;
};

double sq(double v) { return v * v; }

SensorGrid make_empty_grid(Modality m, const Scene& scene,
                           const SensorConfig& cfg, int num_classes,
                           std::uint64_t noise_seed) {
  if (cfg.height <= 0 || cfg.width <= 0 || cfg.num_cameras <= 0) {
    throw std::invalid_argument("render: grid dims must be positive");
  }
  if (num_classes < 2) throw std::invalid_argument("render: num_classes < 2");
  SensorGrid g;
  g.modality = m;
  g.num_cameras = m == Modality::kSem ? cfg.num_cameras : 1;
  g.height = cfg.height * g.num_cameras;
  g.width = cfg.width;
  g.features = channel::count(num_classes);
  g.values = Matrix<float>(g.cells(), g.features);
  g.cell_coords = make_cell_coords(scene.extent, g.height, g.width, g.num_cameras);
  g.noise.render_seed = noise_seed;
  return g;
}

void rasterize(SensorGrid& g, const Scene& scene, const SensorConfig& cfg,
               const std::vector<Observation>& obs) {
  const double cell_w = (scene.extent.x_max - scene.extent.x_min) / g.width;
  const double cell_h = (scene.extent.y_max - scene.extent.y_min) / g.height;
  const double inv_two_sigma2 = 1.0 / (2.0 * sq(cfg.blob_sigma_cells));
  for (int cell = 0; cell < g.cells(); ++cell) {
    const double cx = g.cell_coords(cell, 0);
    const double cy = g.cell_coords(cell, 1);
    int owner = -1;
    double best = kMinFootprint;
    for (std::size_t k = 0; k < obs.size(); ++k) {
      const double d2 = sq((obs[k].x - cx) / cell_w) + sq((obs[k].y - cy) / cell_h);
      const double gk = std::exp(-d2 * inv_two_sigma2);
      if (gk > best) {
        best = gk;
        owner = static_cast<int>(k);
      }
    }
    if (owner < 0) continue;
    const Observation& o = obs[owner];
    float* v = g.values.row(cell);
    v[channel::kIntensity] = static_cast<float>(best);
    v[channel::kOffsetX] = static_cast<float>(best * (o.x - cx));
    v[channel::kOffsetY] = static_cast<float>(best * (o.y - cy));
    v[channel::kLogW] = static_cast<float>(best * std::log(o.w));
    v[channel::kLogL] = static_cast<float>(best * std::log(o.l));
    for (std::size_t c = 0; c < o.class_vec.size(); ++c) {
      v[channel::kClass0 + c] = static_cast<float>(best * o.class_vec[c]);
    }
  }
}

std::vector<double> class_vector(int class_id, int num_classes,
                                 const SensorConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int reported = class_id;
  // Always draw so the stream layout does not depend on the config.
  const double shuffle_draw = u(rng);
  const int other = std::uniform_int_distribution<int>(0, num_classes - 2)(rng);
  if (shuffle_draw < cfg.class_shuffle_prob) {
    reported = other >= class_id ? other + 1 : other;
  }
  std::vector<double> vec(num_classes, cfg.class_confusion / num_classes);
  vec[reported] += 1.0 - cfg.class_confusion;
  return vec;
}

void add_noise_floor(SensorGrid& g, double floor, std::mt19937_64& rng) {
  if (floor <= 0) return;
  std::uniform_real_distribution<double> u(-floor, floor);
  for (auto& v : g.values.storage()) v += static_cast<float>(u(rng));
}

// Zeroes a band of columns [start, start + round(fraction * width)) taken
// modulo the width. `start` does not depend on the fraction, so larger
// fractions occlude supersets.
void occlude_band(SensorGrid& g, double fraction, std::mt19937_64& rng) {
  const int start = std::uniform_int_distribution<int>(0, g.width - 1)(rng);
  const int band = static_cast<int>(std::lround(fraction * g.width));
  for (int k = 0; k < band; ++k) {
    const int c = (start + k) % g.width;
    for (int r = 0; r < g.height; ++r) {
      for (int f = 0; f < g.features; ++f) g.at(r, c, f) = 0.0f;
    }
  }
}

SensorGrid render_impl(Modality m, const Scene& scene, const SensorConfig& cfg,
                       int num_classes, std::uint64_t noise_seed) {
  SensorGrid g = make_empty_grid(m, scene, cfg, num_classes, noise_seed);
  std::mt19937_64 rng(mix_seed(noise_seed, m == Modality::kGeo ? 0x6e0 : 0x5e3));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double cell_w = (scene.extent.x_max - scene.extent.x_min) / g.width;
  const double cell_h = (scene.extent.y_max - scene.extent.y_min) / g.height;
  std::vector<Observation> obs;
  obs.reserve(scene.boxes.size());
  for (const auto& b : scene.boxes) {
    if (b.class_id < 0 || b.class_id >= num_classes) {
      throw std::invalid_argument("render: class_id out of range");
    }
    Observation o;
    const double jx = normal(rng), jy = normal(rng);
    const double sw = normal(rng), sl = normal(rng);
    o.x = b.x + cfg.position_jitter_cells * cell_w * jx;
    o.y = b.y + cfg.position_jitter_cells * cell_h * jy;
    o.w = b.w * std::max(0.2, 1.0 + cfg.size_noise * sw);
    o.l = b.l * std::max(0.2, 1.0 + cfg.size_noise * sl);
    o.class_vec = class_vector(b.class_id, num_classes, cfg, rng);
    obs.push_back(std::move(o));
  }
  rasterize(g, scene, cfg, obs);
  add_noise_floor(g, cfg.noise_floor, rng);
  occlude_band(g, cfg.occlusion_fraction, rng);
  return g;
}

}  // namespace

std::string to_string(Modality m) { return m == Modality::kGeo ? "geo" : "sem"; }

Modality modality_from_string(const std::string& s) {
  if (s == "geo") return Modality::kGeo;
  if (s == "sem") return Modality::kSem;
  throw std::invalid_argument("unknown modality '" + s + "'");
}

std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::kNone: return "none";
    case CorruptionKind::kMissingModality: return "missing_modality";
    case CorruptionKind::kAdditiveNoise: return "additive_noise";
    case CorruptionKind::kOcclusionPatch: return "occlusion_patch";
    case CorruptionKind::kPositionJitter: return "position_jitter";
  }
  throw std::invalid_argument("unknown corruption kind");
}

std::string to_string(CorruptionTarget t) {
  switch (t) {
    case CorruptionTarget::kGeo: return "geo";
    case CorruptionTarget::kSem: return "sem";
    case CorruptionTarget::kBoth: return "both";
  }
  throw std::invalid_argument("unknown corruption target");
}

CorruptionKind corruption_kind_from_string(const std::string& s) {
  for (auto k : {CorruptionKind::kNone, CorruptionKind::kMissingModality,
                 CorruptionKind::kAdditiveNoise, CorruptionKind::kOcclusionPatch,
                 CorruptionKind::kPositionJitter}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown corruption kind '" + s + "'");
}

CorruptionTarget corruption_target_from_string(const std::string& s) {
  for (auto t : {CorruptionTarget::kGeo, CorruptionTarget::kSem,
                 CorruptionTarget::kBoth}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown corruption target '" + s + "'");
}

bool CorruptionSpec::applies_to(Modality m) const {
  return target == CorruptionTarget::kBoth ||
         (target == CorruptionTarget::kGeo && m == Modality::kGeo) ||
         (target == CorruptionTarget::kSem && m == Modality::kSem);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Extent extent_of(const WorldConfig& cfg) {
  return Extent{cfg.x_min, cfg.x_max, cfg.y_min, cfg.y_max};
}

Matrix<double> make_cell_coords(const Extent& extent, int height, int width,
                                int num_cameras) {
  Matrix<double> coords(height * width, 2);
  const double cell_w = (extent.x_max - extent.x_min) / width;
  const double cell_h = (extent.y_max - extent.y_min) / height;
  (void)num_cameras;  // strips of equal height tile the rows exactly
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      coords(r * width + c, 0) = extent.x_min + (c + 0.5) * cell_w;
      coords(r * width + c, 1) = extent.y_min + (r + 0.5) * cell_h;
    }
  }
  return coords;
}

Scene generate_scene(std::uint64_t seed, const WorldConfig& cfg) {
  if (!(cfg.x_max > cfg.x_min) || !(cfg.y_max > cfg.y_min)) {
    throw std::invalid_argument("generate_scene: extent must be positive");
  }
  if (cfg.num_classes < 2 ||
      static_cast<int>(cfg.class_sizes.size()) != cfg.num_classes) {
    throw std::invalid_argument("generate_scene: need >= 2 classes with sizes");
  }
  if (cfg.max_objects < 0 || cfg.min_objects < 0) {
    throw std::invalid_argument("generate_scene: negative object count");
  }
  Scene scene;
  scene.extent = extent_of(cfg);
  scene.seed = seed;
  std::mt19937_64 rng(mix_seed(seed, 0x5ce));
  const int lo = std::min(cfg.min_objects, cfg.max_objects);
  const int count = std::uniform_int_distribution<int>(lo, cfg.max_objects)(rng);
  const double margin_x = std::min(kPlacementMargin, 0.25 * (cfg.x_max - cfg.x_min));
  const double margin_y = std::min(kPlacementMargin, 0.25 * (cfg.y_max - cfg.y_min));
  std::uniform_real_distribution<double> ux(cfg.x_min + margin_x, cfg.x_max - margin_x);
  std::uniform_real_distribution<double> uy(cfg.y_min + margin_y, cfg.y_max - margin_y);
  std::uniform_real_distribution<double> usize(-cfg.size_jitter, cfg.size_jitter);
  std::uniform_int_distribution<int> uclass(0, cfg.num_classes - 1);
  for (int k = 0; k < count; ++k) {
    GroundTruthBox b;
    b.class_id = uclass(rng);
    b.w = cfg.class_sizes[b.class_id][0] * (1.0 + usize(rng));
    b.l = cfg.class_sizes[b.class_id][1] * (1.0 + usize(rng));
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      b.x = ux(rng);
      b.y = uy(rng);
      placed = std::all_of(scene.boxes.begin(), scene.boxes.end(),
                           [&](const GroundTruthBox& o) {
                             return std::hypot(o.x - b.x, o.y - b.y) >=
                                    cfg.min_separation;
                           });
    }
    if (!placed) {
      throw std::runtime_error("generate_scene: cannot place object " +
                               std::to_string(k) + " for seed " +
                               std::to_string(seed) + " after " +
                               std::to_string(cfg.max_retries) + " retries");
    }
    scene.boxes.push_back(b);
  }
  return scene;
}

SensorGrid render_geo_view(const Scene& scene, const SensorConfig& cfg,
                           int num_classes, std::uint64_t noise_seed) {
  return render_impl(Modality::kGeo, scene, cfg, num_classes, noise_seed);
}

SensorGrid render_sem_view(const Scene& scene, const SensorConfig& cfg,
                           int num_classes, std::uint64_t noise_seed) {
  return render_impl(Modality::kSem, scene, cfg, num_classes, noise_seed);
}

SensorGrid render_view(Modality m, const Scene& scene, const SensorConfig& cfg,
                       int num_classes, std::uint64_t noise_seed) {
  return render_impl(m, scene, cfg, num_classes, noise_seed);
}

SensorGrid apply_corruption(const SensorGrid& grid, const CorruptionSpec& spec) {
  if (!spec.applies_to(grid.modality)) {
    throw std::invalid_argument("apply_corruption: target " +
                                to_string(spec.target) + " does not cover " +
                                to_string(grid.modality));
  }
  if (!(spec.magnitude >= 0)) {
    throw std::invalid_argument("apply_corruption: magnitude must be >= 0");
  }
  SensorGrid out = grid;
  std::mt19937_64 rng(mix_seed(spec.seed, 0xc0));
  switch (spec.kind) {
    case CorruptionKind::kNone:
      return out;
    case CorruptionKind::kMissingModality:
      out.values.fill(0.0f);
      out.noise.missing = true;
      break;
    case CorruptionKind::kAdditiveNoise: {
      if (spec.magnitude == 0) return out;
      std::normal_distribution<double> n(0.0, spec.magnitude);
      for (auto& v : out.values.storage()) v += static_cast<float>(n(rng));
      break;
    }
    case CorruptionKind::kOcclusionPatch: {
      if (spec.magnitude > 1) {
        throw std::invalid_argument("apply_corruption: occlusion fraction > 1");
      }
      if (spec.magnitude == 0) return out;
      const double side = std::sqrt(spec.magnitude);
      const int ph = std::clamp(static_cast<int>(std::lround(side * grid.height)), 1, grid.height);
      const int pw = std::clamp(static_cast<int>(std::lround(side * grid.width)), 1, grid.width);
      const int r0 = std::uniform_int_distribution<int>(0, grid.height - ph)(rng);
      const int c0 = std::uniform_int_distribution<int>(0, grid.width - pw)(rng);
      for (int r = r0; r < r0 + ph; ++r) {
        for (int c = c0; c < c0 + pw; ++c) {
          for (int f = 0; f < grid.features; ++f) out.at(r, c, f) = 0.0f;
        }
      }
      break;
    }
    case CorruptionKind::kPositionJitter: {
      if (spec.magnitude == 0) return out;
      const double theta = std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);
      const int dc = static_cast<int>(std::lround(spec.magnitude * std::cos(theta)));
      const int dr = static_cast<int>(std::lround(spec.magnitude * std::sin(theta)));
      out.values.fill(0.0f);
      for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
          const int sr = r - dr, sc = c - dc;
          if (sr < 0 || sr >= grid.height || sc < 0 || sc >= grid.width) continue;
          for (int f = 0; f < grid.features; ++f) out.at(r, c, f) = grid.at(sr, sc, f);
        }
      }
      break;
    }
    default:
      throw std::invalid_argument("apply_corruption: unknown corruption kind");
  }
  out.noise.applied.push_back(spec);
  return out;
}

Scene paste_augment(const Scene& scene, const std::vector<GroundTruthBox>& bank,
                    std::uint64_t seed, int max_paste, double min_separation) {
  const int k = std::min<int>(std::max(max_paste, 0), static_cast<int>(bank.size()));
  Scene out = scene;
  if (k == 0) return out;
  std::mt19937_64 rng(mix_seed(seed, 0xa6));
  std::vector<int> idx(bank.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first k entries are a uniform sample.
  for (int i = 0; i < k; ++i) {
    const int j = std::uniform_int_distribution<int>(i, static_cast<int>(idx.size()) - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  for (int i = 0; i < k; ++i) {
    const GroundTruthBox& b = bank[idx[i]];
    if (!out.extent.contains(b.x, b.y)) continue;
    const bool clear = std::all_of(out.boxes.begin(), out.boxes.end(),
                                   [&](const GroundTruthBox& o) {
                                     return std::hypot(o.x - b.x, o.y - b.y) >= min_separation;
                                   });
    if (clear) out.boxes.push_back(b);
  }
  return out;
}

double grid_energy(const SensorGrid& grid) {
  if (grid.values.empty()) return 0.0;
  double e = 0;
  for (float v : grid.values.storage()) e += static_cast<double>(v) * v;
  return e / static_cast<double>(grid.values.size());
}

}  // namespace modfuse
