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

// Synthetic bird's-eye-view world with two complementary sensor views.
//
// The geometric view (GEO) stands in for a LiDAR BEV feature map: objects
// appear at their true position with accurate size, but the class channels
// are heavily smoothed and sometimes wrong. The semantic view (SEM) stands
// in for camera features: class channels are sharp, but positions are
// jittered, sizes are noisy and parts of the view can be occluded.
//
// Both views are dense H x W x F grids. For each cell the renderer picks
// the object whose Gaussian footprint is strongest there (the "owner") and
// writes, scaled by that footprint weight g:
//
//   channel 0        g                          (intensity)
//   channels 1, 2    g * (center - cell center) (meters)
//   channels 3, 4    g * log(w), g * log(l)
//   channels 5..     g * class vector
//
// so F = 5 + num_classes. Rows index y and columns index x, both increasing.

#ifndef MODFUSE_WORLD_HPP_
#define MODFUSE_WORLD_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "modfuse/config.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

enum class Modality { kGeo, kSem };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

namespace channel {
inline constexpr int kIntensity = 0;
inline constexpr int kOffsetX = 1;
inline constexpr int kOffsetY = 2;
inline constexpr int kLogW = 3;
inline constexpr int kLogL = 4;
inline constexpr int kClass0 = 5;
inline constexpr int count(int num_classes) { return kClass0 + num_classes; }
}  // namespace channel

struct GroundTruthBox {
  double x = 0;  // BEV center, meters
  double y = 0;
  double w = 1;  // size, meters
  double l = 1;
  int class_id = 0;
  double yaw = 0;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct Extent {
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;

  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  friend bool operator==(const Extent&, const Extent&) = default;
};

Extent extent_of(const WorldConfig& cfg);

struct Scene {
  std::vector<GroundTruthBox> boxes;
  Extent extent;
  std::uint64_t seed = 0;

  friend bool operator==(const Scene&, const Scene&) = default;
};

enum class CorruptionKind {
  kNone,
  kMissingModality,
  kAdditiveNoise,
  kOcclusionPatch,
  kPositionJitter,
};

enum class CorruptionTarget { kGeo, kSem, kBoth };

std::string to_string(CorruptionKind k);
std::string to_string(CorruptionTarget t);
// Both throw std::invalid_argument on unknown names.
CorruptionKind corruption_kind_from_string(const std::string& s);
CorruptionTarget corruption_target_from_string(const std::string& s);

// MISSING_MODALITY ignores the magnitude. OCCLUSION_PATCH magnitude is the
// masked area fraction in [0, 1]. ADDITIVE_NOISE magnitude is the Gaussian
// standard deviation. POSITION_JITTER magnitude is a whole-grid shift in
// cells.
struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kNone;
  double magnitude = 0;
  CorruptionTarget target = CorruptionTarget::kBoth;
  std::uint64_t seed = 0;

  bool applies_to(Modality m) const;
  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

// What was done to a grid after rendering.
struct NoiseRecord {
  std::uint64_t render_seed = 0;
  bool missing = false;
  std::vector<CorruptionSpec> applied;

  friend bool operator==(const NoiseRecord&, const NoiseRecord&) = default;
};

struct SensorGrid {
  Modality modality = Modality::kGeo;
  int height = 0;  // total rows (cameras stacked along y)
  int width = 0;
  int features = 0;
  int num_cameras = 1;
  Matrix<float> values;        // (height * width) x features, row-major cells
  Matrix<double> cell_coords;  // (height * width) x 2, BEV meters
  NoiseRecord noise;

  int cells() const { return height * width; }
  float& at(int r, int c, int f) { return values(r * width + c, f); }
  float at(int r, int c, int f) const { return values(r * width + c, f); }

  friend bool operator==(const SensorGrid&, const SensorGrid&) = default;
};

// Cell-center coordinates for a view. Cameras split the y range into equal
// strips stacked along the rows.
Matrix<double> make_cell_coords(const Extent& extent, int height, int width,
                                int num_cameras);

// Throws std::runtime_error naming the seed if placement fails.
Scene generate_scene(std::uint64_t seed, const WorldConfig& cfg);

SensorGrid render_geo_view(const Scene& scene, const SensorConfig& cfg,
                           int num_classes, std::uint64_t noise_seed);
SensorGrid render_sem_view(const Scene& scene, const SensorConfig& cfg,
                           int num_classes, std::uint64_t noise_seed);
SensorGrid render_view(Modality m, const Scene& scene, const SensorConfig& cfg,
                       int num_classes, std::uint64_t noise_seed);

// Pure: returns a corrupted copy. Throws std::invalid_argument when the
// target does not cover the grid modality or the spec is malformed.
SensorGrid apply_corruption(const SensorGrid& grid, const CorruptionSpec& spec);

// Pastes up to `max_paste` distinct boxes from `bank` at their own
// positions, skipping any that violate the minimum separation.
Scene paste_augment(const Scene& scene, const std::vector<GroundTruthBox>& bank,
                    std::uint64_t seed, int max_paste, double min_separation);

// Mean squared feature value of a grid.
double grid_energy(const SensorGrid& grid);

// Deterministic seed derivation (splitmix64 of the combined inputs).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace modfuse

#endif  // MODFUSE_WORLD_HPP_
