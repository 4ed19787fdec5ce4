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

// Two-stage training.
//
// Stage 1 trains tokenizers, decoder, box head and queries under the
// three-branch loss, with ground-truth pasting for the first
// augment_fraction of the epochs. Stage 2 freezes all of that and trains
// only the "pme." parameters under the ensemble loss.
//
// A step accumulates gradients over batch_size scenes and applies one
// AdamW update.

#ifndef MODFUSE_TRAINING_HPP_
#define MODFUSE_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "modfuse/config.hpp"
#include "modfuse/dataset.hpp"
#include "modfuse/model.hpp"

namespace modfuse {

inline constexpr int kCheckpointSchemaVersion = 1;

// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates every named parameter that has a gradient buffer, using the
  // gradient as is. Parameters for which `decay` returns false get no
  // weight decay.
  void step(const std::map<std::string, ag::Var<float>>& params, double lr,
            double weight_decay,
            const std::function<bool(const std::string&)>& decay);

  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// Biases, normalization parameters, the proximity scalars and the query
// parameters are not decayed.
bool decays(const std::string& name);

// Learning rate at `step` (0-based) of `total` steps.
//   cyclic   triangular: 0.1 lr -> lr over the first 40%, then down to
//            0.001 lr
//   cosine   linear warmup from 0 over `warmup` steps, then cosine to 0
//   constant lr
double scheduled_lr(const std::string& schedule, double lr, long step,
                    long total, long warmup);

struct StepRecord {
  int stage = 1;
  long step = 0;
  int epoch = 0;
  double lr = 0;
  std::map<std::string, double> losses;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void()> on_paste;
};

struct TrainResult {
  long steps = 0;
  std::vector<double> step_losses;
};

// Trains in place. Throws std::runtime_error naming the step if the loss
// becomes non-finite. `log` receives one JSON line per step.
TrainResult train_stage1(Detector<float>& model,
                         const std::vector<SceneRecord>& train,
                         std::ostream* log = nullptr,
                         const TrainHooks& hooks = {});

TrainResult train_stage2(Detector<float>& model,
                         const std::vector<SceneRecord>& train,
                         std::ostream* log = nullptr,
                         const TrainHooks& hooks = {});

struct Checkpoint {
  int schema_version = kCheckpointSchemaVersion;
  int stage = 0;
  long step = 0;
  ExperimentConfig config;
  std::map<std::string, Matrix<float>> tensors;
};

Checkpoint make_checkpoint(const Detector<float>& model, int stage, long step);

// Copies every checkpoint tensor into the model. Throws on unknown keys or
// shape mismatches.
void restore(Detector<float>& model, const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws std::runtime_error on a bad header, unsupported schema version or
// a truncated payload (naming the affected tensor).
Checkpoint load_checkpoint(const std::string& path);
Checkpoint parse_checkpoint(const std::string& bytes);

// FNV-1a over the raw bytes of the selected parameters, in name order.
std::uint64_t parameter_hash(const Detector<float>& model,
                             const std::function<bool(const std::string&)>& select);

}  // namespace modfuse

#endif  // MODFUSE_TRAINING_HPP_
