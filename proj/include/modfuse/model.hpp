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

// The full detector: tokenizers, shared decoder with its box head, and the
// ensemble module, all registered in one parameter store.

#ifndef MODFUSE_MODEL_HPP_
#define MODFUSE_MODEL_HPP_

#include <memory>
#include <string>

#include "modfuse/config.hpp"
#include "modfuse/decoder.hpp"
#include "modfuse/pme.hpp"
#include "modfuse/tokenizer.hpp"
#include "modfuse/world.hpp"

namespace modfuse {

enum class Ensemble { kPme, kNme, kTopk, kNms, kNone };

std::string to_string(Ensemble e);
// Throws std::invalid_argument on unknown names.
Ensemble ensemble_from_string(const std::string& s);

// Which sensors reach the detector.
enum class InputMode { kFull, kCameraOnly, kLidarOnly };

std::string to_string(InputMode m);

// Derived from the grids' missing flags. Throws if both are missing.
InputMode input_mode(const SensorGrid& geo, const SensorGrid& sem);

inline bool is_pme_parameter(const std::string& name) {
  return name.rfind("pme.", 0) == 0;
}

template <typename T>
class Detector {
 public:
  // Parameter initialization is seeded by model.init_seed and train.seed.
  explicit Detector(const ExperimentConfig& cfg);

  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  ag::ParameterStore<T>& params() { return store_; }
  const ag::ParameterStore<T>& params() const { return store_; }
  const ExperimentConfig& config() const { return cfg_; }

  const Tokenizer<T>& tokenizer() const { return tokenizer_; }
  const MoadDecoder<T>& moad() const { return moad_; }
  const Pme<T>& pme() const { return pme_; }

  QuerySet<T> queries() const { return moad_.queries(tokenizer_); }

  // Tokenizes whichever grids are given (null to skip) and runs the
  // decoding branches for `mode`.
  MoadOutput<T> forward_moad(const SensorGrid* geo, const SensorGrid* sem,
                             MoadMode mode) const;

  // Ensemble over a TRAIN-mode output.
  BranchOutput<T> forward_pme(const MoadOutput<T>& moad, bool use_bias) const {
    return pme_.forward(moad, moad_.anchors(), use_bias);
  }

 private:
  ExperimentConfig cfg_;
  ag::ParameterStore<T> store_;
  Tokenizer<T> tokenizer_;
  MoadDecoder<T> moad_;
  Pme<T> pme_;
};

// Test-time prediction. With both sensors, `ensemble` selects the output:
// none is the fused branch, pme/nme the ensemble head, topk/nms the pooled
// baselines. With one sensor missing the surviving single-modality branch
// is returned; asking for pme or nme then throws std::invalid_argument.
template <typename T>
BoxPredictionSet<T> infer(const Detector<T>& model, const SensorGrid& geo,
                          const SensorGrid& sem, Ensemble ensemble);

}  // namespace modfuse

#endif  // MODFUSE_MODEL_HPP_
