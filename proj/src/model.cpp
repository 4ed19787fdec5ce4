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

#include "modfuse/model.hpp"

#include <optional>
#include <random>
#include <stdexcept>

namespace modfuse {

std::string to_string(Ensemble e) {
  switch (e) {
    case Ensemble::kPme: return "pme";
    case Ensemble::kNme: return "nme";
    case Ensemble::kTopk: return "topk";
    case Ensemble::kNms: return "nms";
    case Ensemble::kNone: return "none";
  }
  return "?";
}

Ensemble ensemble_from_string(const std::string& s) {
  for (Ensemble e : {Ensemble::kPme, Ensemble::kNme, Ensemble::kTopk,
                     Ensemble::kNms, Ensemble::kNone}) {
    if (to_string(e) == s) return e;
  }
  throw std::invalid_argument("unknown ensemble '" + s +
                              "' (expected pme, nme, topk, nms or none)");
}

std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::kFull: return "full";
    case InputMode::kCameraOnly: return "camera_only";
    case InputMode::kLidarOnly: return "lidar_only";
  }
  return "?";
}

InputMode input_mode(const SensorGrid& geo, const SensorGrid& sem) {
  if (geo.noise.missing && sem.noise.missing) {
    throw std::invalid_argument("both modalities are missing");
  }
  if (geo.noise.missing) return InputMode::kCameraOnly;
  if (sem.noise.missing) return InputMode::kLidarOnly;
  return InputMode::kFull;
}

namespace {

std::mt19937_64 module_rng(const ExperimentConfig& cfg, std::uint64_t tag) {
  return std::mt19937_64(
      mix_seed(mix_seed(cfg.model.init_seed, cfg.train.seed), tag));
}

}  // namespace

template <typename T>
Detector<T>::Detector(const ExperimentConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int features = channel::count(cfg_.world.num_classes);
  auto r1 = module_rng(cfg_, 1);
  tokenizer_ = Tokenizer<T>(store_, cfg_.model, features, r1);
  ModelConfig mc = cfg_.model;
  mc.init_seed = mix_seed(cfg_.model.init_seed, cfg_.train.seed);
  auto r2 = module_rng(cfg_, 2);
  moad_ = MoadDecoder<T>(store_, mc, extent_of(cfg_.world), cfg_.world.num_classes, r2);
  auto r3 = module_rng(cfg_, 3);
  pme_ = Pme<T>(store_, cfg_.model, cfg_.world.num_classes, r3);
}

template <typename T>
MoadOutput<T> Detector<T>::forward_moad(const SensorGrid* geo,
                                        const SensorGrid* sem,
                                        MoadMode mode) const {
  std::optional<TokenSet<T>> tg, ts;
  if (geo != nullptr) tg = tokenizer_.tokenize(*geo);
  if (sem != nullptr) ts = tokenizer_.tokenize(*sem);
  return moad_.forward(queries(), tg ? &*tg : nullptr, ts ? &*ts : nullptr, mode);
}

template <typename T>
BoxPredictionSet<T> infer(const Detector<T>& model, const SensorGrid& geo,
                          const SensorGrid& sem, Ensemble ensemble) {
  const InputMode mode = input_mode(geo, sem);
  if (mode != InputMode::kFull) {
    if (ensemble == Ensemble::kPme || ensemble == Ensemble::kNme) {
      throw std::invalid_argument(
          "ensemble " + to_string(ensemble) + " needs both modalities; input is " +
          to_string(mode) + ", use ensemble=none for single-branch inference");
    }
    if (mode == InputMode::kCameraOnly) {
      return model.forward_moad(nullptr, &sem, MoadMode::kTestC).at(Branch::kC).predictions;
    }
    return model.forward_moad(&geo, nullptr, MoadMode::kTestL).at(Branch::kL).predictions;
  }
  if (ensemble == Ensemble::kNone) {
    return model.forward_moad(&geo, &sem, MoadMode::kTestLC).at(Branch::kLC).predictions;
  }
  auto out = model.forward_moad(&geo, &sem, MoadMode::kTrain);
  switch (ensemble) {
    case Ensemble::kPme: return model.forward_pme(out, true).predictions;
    case Ensemble::kNme: return model.forward_pme(out, false).predictions;
    case Ensemble::kTopk: {
      int k = model.config().eval.topk;
      if (k <= 0) k = model.config().model.n_queries;
      return ensemble_topk<T>({out.at(Branch::kLC).predictions,
                               out.at(Branch::kL).predictions,
                               out.at(Branch::kC).predictions},
                              k);
    }
    case Ensemble::kNms:
      return ensemble_nms<T>({out.at(Branch::kLC).predictions,
                              out.at(Branch::kL).predictions,
                              out.at(Branch::kC).predictions},
                             model.config().eval.nms_distance);
    case Ensemble::kNone: break;
  }
  throw std::logic_error("infer: unreachable");
}

template class Detector<float>;
template class Detector<double>;
template BoxPredictionSet<float> infer<float>(const Detector<float>&, const SensorGrid&,
                                              const SensorGrid&, Ensemble);
template BoxPredictionSet<double> infer<double>(const Detector<double>&, const SensorGrid&,
                                                const SensorGrid&, Ensemble);

}  // namespace modfuse
