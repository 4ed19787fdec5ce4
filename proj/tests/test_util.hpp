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

// Shared helpers for the unit tests.

#ifndef MODFUSE_TESTS_TEST_UTIL_HPP_
#define MODFUSE_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "modfuse/autograd.hpp"
#include "modfuse/config.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse::testing {

// A configuration small enough for exhaustive gradient checks.
inline ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.geo.height = cfg.geo.width = 4;
  cfg.sem.height = cfg.sem.width = 4;
  cfg.model.d_model = 8;
  cfg.model.heads = 2;
  cfg.model.layers = 2;
  cfg.model.ffn_hidden = 16;
  cfg.model.n_queries = 6;
  cfg.world.min_objects = 3;
  cfg.world.max_objects = 3;
  cfg.data.num_scenes = 8;
  cfg.data.train_fraction = 1.0;
  cfg.data.val_fraction = 0.0;
  cfg.data.test_fraction = 0.0;
  return cfg;
}

// A configuration for fast end-to-end training tests.
inline ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.geo.height = cfg.geo.width = 8;
  cfg.sem.height = cfg.sem.width = 8;
  cfg.model.d_model = 16;
  cfg.model.heads = 2;
  cfg.model.layers = 2;
  cfg.model.ffn_hidden = 32;
  cfg.model.n_queries = 10;
  cfg.data.num_scenes = 8;
  cfg.data.train_fraction = 1.0;
  cfg.data.val_fraction = 0.0;
  cfg.data.test_fraction = 0.0;
  cfg.train.stage1_epochs = 1;
  cfg.train.stage2_epochs = 1;
  cfg.train.batch_size = 4;
  cfg.train.warmup_steps = 2;
  return cfg;
}

template <typename T>
Matrix<T> random_matrix(int rows, int cols, std::mt19937_64& rng, double lo = -1.0,
                        double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix<T> m(rows, cols);
  for (auto& v : m.storage()) v = static_cast<T>(u(rng));
  return m;
}

struct GradCheck {
  double max_relative_error = 0;  // worst per-tensor relative error
  std::string worst_tensor;
  int checked = 0;
};

// Compares the analytic gradient of `loss` with central differences for
// every entry of every named leaf. The relative error of a tensor is
// ||g_a - g_n|| / max(||g_a||, ||g_n||). Tensors whose gradients are both
// below `floor` in norm count as exact if their difference is too.
inline GradCheck check_gradients(const std::map<std::string, ag::Var<double>>& leaves,
                                 const std::function<ag::Var<double>()>& loss,
                                 double h = 1e-6, double floor = 1e-7) {
  for (const auto& [name, p] : leaves) {
    p->grad = Matrix<double>();
  }
  ag::backward(loss());
  ag::NoGradGuard no_grad;
  GradCheck out;
  for (const auto& [name, p] : leaves) {
    Matrix<double> analytic = p->grad.same_shape(p->value)
                                  ? p->grad
                                  : Matrix<double>(p->rows(), p->cols());
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = ag::scalar(loss());
      x = saved - h;
      const double down = ag::scalar(loss());
      x = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++out.checked;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    double rel = 0;
    if (denom >= floor) rel = std::sqrt(diff2) / denom;
    else if (std::sqrt(diff2) >= floor) rel = 1.0;
    if (rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_tensor = name;
    }
  }
  return out;
}

}  // namespace modfuse::testing

#endif  // MODFUSE_TESTS_TEST_UTIL_HPP_
