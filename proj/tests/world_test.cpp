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

#include <cmath>

#include <gtest/gtest.h>

namespace modfuse {
namespace {

SensorConfig Noiseless() {
  SensorConfig s;
  s.noise_floor = 0.0;
  return s;
}

Scene OneObject(double x, double y, int cls = 0) {
  Scene s;
  s.extent = Extent{-16, 16, -16, 16};
  s.boxes.push_back(GroundTruthBox{x, y, 2.0, 4.0, cls, 0.0});
  return s;
}

int ArgmaxCell(const SensorGrid& g) {
  int best = 0;
  for (int i = 1; i < g.cells(); ++i) {
    if (g.values(i, channel::kIntensity) > g.values(best, channel::kIntensity)) best = i;
  }
  return best;
}

// Half-open cell footprint test.
bool CellContains(const SensorGrid& g, int cell, double x, double y, double cw, double ch) {
  return std::abs(g.cell_coords(cell, 0) - x) <= cw / 2 &&
         std::abs(g.cell_coords(cell, 1) - y) <= ch / 2;
}

TEST(GenerateSceneTest, ZeroObjects) {
  WorldConfig cfg;
  cfg.min_objects = cfg.max_objects = 0;
  EXPECT_TRUE(generate_scene(7, cfg).boxes.empty());
}

TEST(GenerateSceneTest, DeterministicPerSeed) {
  const WorldConfig cfg;
  EXPECT_EQ(generate_scene(7, cfg), generate_scene(7, cfg));
  EXPECT_NE(generate_scene(7, cfg).boxes, generate_scene(8, cfg).boxes);
}

TEST(GenerateSceneTest, CountsSeparationAndExtent) {
  const WorldConfig cfg;
  const Extent e = extent_of(cfg);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = generate_scene(seed, cfg);
    ASSERT_GE(static_cast<int>(s.boxes.size()), cfg.min_objects);
    ASSERT_LE(static_cast<int>(s.boxes.size()), cfg.max_objects);
    for (std::size_t i = 0; i < s.boxes.size(); ++i) {
      ASSERT_TRUE(e.contains(s.boxes[i].x, s.boxes[i].y));
      for (std::size_t j = 0; j < i; ++j) {
        ASSERT_GE(std::hypot(s.boxes[i].x - s.boxes[j].x, s.boxes[i].y - s.boxes[j].y),
                  cfg.min_separation);
      }
    }
  }
}

TEST(GenerateSceneTest, InfeasiblePlacementNamesSeed) {
  WorldConfig cfg;
  cfg.min_objects = cfg.max_objects = 50;
  cfg.min_separation = 20.0;
  cfg.max_retries = 20;
  try {
    generate_scene(1234, cfg);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("1234"), std::string::npos);
  }
}

TEST(RenderTest, EmptySceneStaysWithinNoiseFloor) {
  Scene s;
  s.extent = Extent{-16, 16, -16, 16};
  SensorConfig cfg;
  cfg.noise_floor = 0.05;
  for (Modality m : {Modality::kGeo, Modality::kSem}) {
    const auto g = render_view(m, s, cfg, 3, 11);
    EXPECT_EQ(g.features, channel::count(3));
    for (float v : g.values.storage()) {
      ASSERT_LE(std::abs(v), 0.05f);
    }
  }
}

TEST(RenderTest, NoiselessBlobPeaksAtTrueCenter) {
  for (Modality m : {Modality::kGeo, Modality::kSem}) {
    const auto scene = OneObject(0.3, -0.4);
    const auto g = render_view(m, scene, Noiseless(), 3, 1);
    const double cw = 32.0 / g.width, ch = 32.0 / g.height;
    EXPECT_TRUE(CellContains(g, ArgmaxCell(g), 0.3, -0.4, cw, ch)) << to_string(m);
  }
}

TEST(RenderTest, EveryObjectPeaksInItsCellWithoutNoise) {
  const WorldConfig wc;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = generate_scene(seed, wc);
    for (Modality m : {Modality::kGeo, Modality::kSem}) {
      const auto g = render_view(m, scene, Noiseless(), wc.num_classes, seed);
      const double cw = 32.0 / g.width, ch = 32.0 / g.height;
      // A cell belongs to the nearest object (equal footprint widths).
      auto owner = [&](int cell) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < scene.boxes.size(); ++k) {
          if (std::hypot(scene.boxes[k].x - g.cell_coords(cell, 0),
                         scene.boxes[k].y - g.cell_coords(cell, 1)) <
              std::hypot(scene.boxes[best].x - g.cell_coords(cell, 0),
                         scene.boxes[best].y - g.cell_coords(cell, 1))) {
            best = k;
          }
        }
        return best;
      };
      for (std::size_t k = 0; k < scene.boxes.size(); ++k) {
        const auto& b = scene.boxes[k];
        // The cell holding the center peaks over the object's own cells.
        int cell = -1;
        for (int i = 0; i < g.cells() && cell < 0; ++i) {
          if (CellContains(g, i, b.x, b.y, cw, ch)) cell = i;
        }
        ASSERT_GE(cell, 0);
        const int r = cell / g.width, c = cell % g.width;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= g.height || cc < 0 || cc >= g.width) continue;
            if (owner(rr * g.width + cc) != k) continue;
            ASSERT_GE(g.at(r, c, channel::kIntensity), g.at(rr, cc, channel::kIntensity));
          }
        }
      }
    }
  }
}

TEST(RenderTest, NoiseSeedChangesResidualsOnly) {
  const auto scene = OneObject(3.0, 5.0);
  SensorConfig cfg;
  cfg.noise_floor = 0.02;
  const auto a = render_geo_view(scene, cfg, 3, 1);
  const auto b = render_geo_view(scene, cfg, 3, 2);
  EXPECT_NE(a.values, b.values);
  EXPECT_EQ(ArgmaxCell(a), ArgmaxCell(b));
  EXPECT_EQ(render_geo_view(scene, cfg, 3, 1), a);
}

TEST(RenderTest, GeoClassChannelIsDegradedSemIsSharp) {
  const auto scene = OneObject(0.0, 0.0, 1);
  SensorConfig geo = Noiseless();
  geo.class_confusion = 0.6;
  const auto g = render_geo_view(scene, geo, 3, 1);
  const auto s = render_sem_view(scene, Noiseless(), 3, 1);
  const int cg = ArgmaxCell(g), cs = ArgmaxCell(s);
  const double ig = g.values(cg, channel::kIntensity), is = s.values(cs, channel::kIntensity);
  EXPECT_NEAR(g.values(cg, channel::kClass0 + 1) / ig, 0.4 + 0.2, 1e-6);
  EXPECT_NEAR(g.values(cg, channel::kClass0 + 0) / ig, 0.2, 1e-6);
  EXPECT_NEAR(s.values(cs, channel::kClass0 + 1) / is, 1.0, 1e-6);
  EXPECT_EQ(s.values(cs, channel::kClass0 + 0), 0.0f);
}

TEST(RenderTest, FullOcclusionGivesBackground) {
  SensorConfig cfg = Noiseless();
  cfg.occlusion_fraction = 1.0;
  const auto g = render_sem_view(OneObject(0, 0), cfg, 3, 5);
  for (float v : g.values.storage()) ASSERT_EQ(v, 0.0f);
}

TEST(RenderTest, EnergyNonIncreasingInOcclusion) {
  const WorldConfig wc;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = generate_scene(seed, wc);
    double prev = std::numeric_limits<double>::infinity();
    for (double f : {0.0, 0.1, 0.25, 0.5, 0.75, 1.0}) {
      SensorConfig cfg = Noiseless();
      cfg.occlusion_fraction = f;
      const double e = grid_energy(render_sem_view(scene, cfg, wc.num_classes, seed));
      ASSERT_LE(e, prev);
      prev = e;
    }
  }
}

TEST(RenderTest, JitterMonteCarlo) {
  // sigma = 2 cells; the jittered center is recoverable from the peak cell
  // as cell center + offset / intensity.
  SensorConfig cfg = Noiseless();
  cfg.position_jitter_cells = 2.0;
  const auto scene = OneObject(0.0, 0.0);
  const int renders = 1000;
  double sx = 0, sy = 0, sr = 0;
  double sigma = 0;
  for (int i = 0; i < renders; ++i) {
    const auto g = render_sem_view(scene, cfg, 3, 1000 + i);
    sigma = cfg.position_jitter_cells * 32.0 / g.width;
    const int c = ArgmaxCell(g);
    const double it = g.values(c, channel::kIntensity);
    const double x = g.cell_coords(c, 0) + g.values(c, channel::kOffsetX) / it;
    const double y = g.cell_coords(c, 1) + g.values(c, channel::kOffsetY) / it;
    sx += x;
    sy += y;
    sr += std::hypot(x, y);
  }
  const double tol = 3 * sigma / std::sqrt(static_cast<double>(renders));
  EXPECT_NEAR(sx / renders, 0.0, tol);
  EXPECT_NEAR(sy / renders, 0.0, tol);
  // Mean radius of an isotropic 2-D Gaussian.
  EXPECT_NEAR(sr / renders, sigma * std::sqrt(M_PI / 2), tol);
}

TEST(CorruptionTest, IdentitiesAndPurity) {
  const auto scene = OneObject(1, 1);
  const auto g = render_sem_view(scene, SensorConfig{}, 3, 1);
  const auto copy = g;
  EXPECT_EQ(apply_corruption(g, {CorruptionKind::kNone, 3.0, CorruptionTarget::kBoth, 1}), g);
  EXPECT_EQ(apply_corruption(g, {CorruptionKind::kAdditiveNoise, 0.0, CorruptionTarget::kSem, 1}),
            g);
  const auto noisy =
      apply_corruption(g, {CorruptionKind::kAdditiveNoise, 0.5, CorruptionTarget::kSem, 1});
  EXPECT_NE(noisy.values, g.values);
  ASSERT_EQ(noisy.noise.applied.size(), 1u);
  EXPECT_EQ(noisy.noise.applied[0].magnitude, 0.5);
  EXPECT_EQ(g, copy);
}

TEST(CorruptionTest, MissingModalityZeroesAndFlags) {
  const auto g = render_geo_view(OneObject(1, 1), SensorConfig{}, 3, 1);
  const auto m =
      apply_corruption(g, {CorruptionKind::kMissingModality, 0.0, CorruptionTarget::kGeo, 0});
  EXPECT_TRUE(m.noise.missing);
  for (float v : m.values.storage()) ASSERT_EQ(v, 0.0f);
  EXPECT_EQ(m.cell_coords, g.cell_coords);
}

TEST(CorruptionTest, TargetMustCoverModality) {
  const auto g = render_geo_view(OneObject(1, 1), SensorConfig{}, 3, 1);
  EXPECT_THROW(
      apply_corruption(g, {CorruptionKind::kAdditiveNoise, 1.0, CorruptionTarget::kSem, 0}),
      std::invalid_argument);
  EXPECT_THROW(
      apply_corruption(g, {CorruptionKind::kOcclusionPatch, 1.5, CorruptionTarget::kGeo, 0}),
      std::invalid_argument);
  EXPECT_THROW(
      apply_corruption(g, {CorruptionKind::kAdditiveNoise, -1.0, CorruptionTarget::kGeo, 0}),
      std::invalid_argument);
}

TEST(CorruptionTest, OcclusionPatchArea) {
  Scene s;
  s.extent = Extent{-16, 16, -16, 16};
  SensorConfig cfg;
  cfg.noise_floor = 0.5;  // every cell nonzero
  const auto g = render_sem_view(s, cfg, 3, 1);
  const auto o =
      apply_corruption(g, {CorruptionKind::kOcclusionPatch, 0.25, CorruptionTarget::kBoth, 9});
  int zero = 0;
  for (int i = 0; i < o.cells(); ++i) {
    bool all_zero = true;
    for (int f = 0; f < o.features; ++f) all_zero &= o.values(i, f) == 0.0f;
    zero += all_zero;
  }
  EXPECT_EQ(zero, (g.height / 2) * (g.width / 2));
  const auto full =
      apply_corruption(g, {CorruptionKind::kOcclusionPatch, 1.0, CorruptionTarget::kBoth, 9});
  for (float v : full.values.storage()) ASSERT_EQ(v, 0.0f);
}

TEST(CorruptionTest, JitterShiftsWholeGrid) {
  const auto g = render_geo_view(OneObject(0, 0), Noiseless(), 3, 1);
  const auto j =
      apply_corruption(g, {CorruptionKind::kPositionJitter, 2.0, CorruptionTarget::kGeo, 4});
  const int a = ArgmaxCell(g), b = ArgmaxCell(j);
  const int dr = b / g.width - a / g.width, dc = b % g.width - a % g.width;
  EXPECT_LE(std::hypot(dr, dc), 2.0 + 0.75);
  EXPECT_GT(std::hypot(dr, dc), 0.0);
  EXPECT_FLOAT_EQ(g.values(a, channel::kIntensity), j.values(b, channel::kIntensity));
}

TEST(PasteAugmentTest, BoundsSeparationAndDeterminism) {
  Scene empty;
  empty.extent = Extent{-16, 16, -16, 16};
  const std::vector<GroundTruthBox> bank = {
      {0, 0, 1, 1, 0, 0}, {10, 10, 1, 1, 1, 0}, {-10, 5, 1, 1, 2, 0}};
  EXPECT_EQ(paste_augment(empty, bank, 3, 0, 3.0), empty);
  EXPECT_EQ(paste_augment(empty, {}, 3, 5, 3.0), empty);
  const auto out = paste_augment(empty, bank, 3, 3, 3.0);
  EXPECT_LE(out.boxes.size(), 3u);
  EXPECT_EQ(out.boxes.size(), 3u);  // all mutually separated
  EXPECT_EQ(paste_augment(empty, bank, 3, 3, 3.0), out);

  const Scene crowded = OneObject(0.5, 0.5);
  const auto p = paste_augment(crowded, bank, 3, 3, 3.0);
  EXPECT_EQ(p.boxes.front(), crowded.boxes.front());
  for (std::size_t i = 1; i < p.boxes.size(); ++i) {
    EXPECT_GE(std::hypot(p.boxes[i].x - 0.5, p.boxes[i].y - 0.5), 3.0);
  }
  EXPECT_EQ(crowded.boxes.size(), 1u);
}

TEST(MixSeedTest, DeterministicAndSpread) {
  EXPECT_EQ(mix_seed(1, 2), mix_seed(1, 2));
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
  EXPECT_NE(mix_seed(0, 0), 0u);
}

}  // namespace
}  // namespace modfuse
