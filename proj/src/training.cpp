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

#include "modfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "modfuse/matching.hpp"

namespace modfuse {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "MODFUSE-CKPT";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool decays(const std::string& name) {
  if (ends_with(name, ".bias") || ends_with(name, ".gamma") || ends_with(name, ".beta")) {
    return false;
  }
  if (name == "pme.alpha" || name.rfind("query.", 0) == 0) return false;
  return true;
}

void AdamW::step(const std::map<std::string, ag::Var<float>>& params, double lr,
                 double weight_decay,
                 const std::function<bool(const std::string&)>& decay) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, p] : params) {
    if (!p->grad.same_shape(p->value)) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != p->value.size()) {
      m.assign(p->value.size(), 0.0);
      v.assign(p->value.size(), 0.0);
    }
    const bool wd = weight_decay > 0 && (!decay || decay(name));
    float* x = p->value.data();
    const float* g = p->grad.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double gi = g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      double xi = x[i];
      if (wd) xi -= lr * weight_decay * xi;
      xi -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      x[i] = static_cast<float>(xi);
    }
  }
}

double scheduled_lr(const std::string& schedule, double lr, long step,
                    long total, long warmup) {
  if (total <= 0) return lr;
  const double t = std::clamp(static_cast<double>(step) / total, 0.0, 1.0);
  if (schedule == "constant") return lr;
  if (schedule == "cyclic") {
    constexpr double kPeak = 0.4;
    if (t < kPeak) return lr * (0.1 + 0.9 * t / kPeak);
    return lr * (1.0 - (1.0 - 1e-3) * (t - kPeak) / (1.0 - kPeak));
  }
  if (schedule == "cosine") {
    if (step < warmup) return lr * static_cast<double>(step + 1) / warmup;
    const double span = std::max<long>(1, total - warmup);
    const double u = std::clamp(static_cast<double>(step - warmup) / span, 0.0, 1.0);
    return 0.5 * lr * (1.0 + std::cos(M_PI * u));
  }
  throw std::invalid_argument("unknown schedule '" + schedule + "'");
}

namespace {

std::map<std::string, ag::Var<float>> select_params(
    const ag::ParameterStore<float>& store, bool pme) {
  std::map<std::string, ag::Var<float>> out;
  for (const auto& [name, p] : store.all()) {
    if (is_pme_parameter(name) == pme) out.emplace(name, p);
  }
  return out;
}

void clip_gradients(const std::map<std::string, ag::Var<float>>& params, double max_norm) {
  if (max_norm <= 0) return;
  double sq = 0;
  for (const auto& [name, p] : params) {
    if (!p->grad.same_shape(p->value)) continue;
    for (float g : p->grad.storage()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const float s = static_cast<float>(max_norm / norm);
  for (const auto& [name, p] : params) {
    if (!p->grad.same_shape(p->value)) continue;
    for (auto& g : p->grad.storage()) g *= s;
  }
}

std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(mix_seed(seed, 0x0e0c), static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void write_log(std::ostream* log, const StepRecord& r) {
  if (log == nullptr) return;
  json j = {{"stage", r.stage}, {"step", r.step}, {"epoch", r.epoch}, {"lr", r.lr}};
  for (const auto& [k, v] : r.losses) j[k] = v;
  *log << j.dump() << '\n';
}

void check_finite(double v, int stage, long step) {
  if (!std::isfinite(v)) {
    throw std::runtime_error("training diverged: non-finite loss at stage " +
                             std::to_string(stage) + " step " + std::to_string(step));
  }
}

template <typename T>
void check_finite(const BoxPredictionSet<T>& p, int stage, long step) {
  if (!all_finite(p.decoded->value) || !all_finite(p.logits->value)) {
    throw std::runtime_error("training diverged: non-finite " + to_string(p.branch) +
                             " predictions at stage " + std::to_string(stage) + " step " +
                             std::to_string(step));
  }
}

}  // namespace

TrainResult train_stage1(Detector<float>& model, const std::vector<SceneRecord>& train,
                         std::ostream* log, const TrainHooks& hooks) {
  const ExperimentConfig& cfg = model.config();
  const TrainConfig& tc = cfg.train;
  if (train.empty()) throw std::invalid_argument("train_stage1: empty dataset");
  const int bs = tc.batch_size;
  const long steps_per_epoch = (static_cast<long>(train.size()) + bs - 1) / bs;
  const long total = steps_per_epoch * tc.stage1_epochs;
  const int aug_epochs = static_cast<int>(std::lround(tc.augment_fraction * tc.stage1_epochs));
  const auto bank = box_bank(train);
  auto params = select_params(model.params(), false);
  AdamW opt;
  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < tc.stage1_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), tc.seed, epoch);
    for (long b = 0; b < steps_per_epoch; ++b) {
      model.params().zero_grad();
      const std::size_t begin = static_cast<std::size_t>(b) * bs;
      const std::size_t end = std::min(train.size(), begin + bs);
      const float inv = 1.0f / static_cast<float>(end - begin);
      std::map<std::string, double> sums;
      for (std::size_t i = begin; i < end; ++i) {
        const int idx = order[i];
        const SceneRecord* rec = &train[idx];
        SceneRecord augmented;
        if (epoch < aug_epochs && tc.paste_max > 0) {
          if (hooks.on_paste) hooks.on_paste();
          augmented = *rec;
          const std::uint64_t seed =
              mix_seed(mix_seed(tc.seed, static_cast<std::uint64_t>(epoch)),
                       static_cast<std::uint64_t>(idx));
          augmented.scene = paste_augment(rec->scene, bank, seed, tc.paste_max,
                                          cfg.world.min_separation);
          render_record(augmented, cfg);
          rec = &augmented;
        }
        auto out = model.forward_moad(&rec->geo, &rec->sem, MoadMode::kTrain);
        for (const auto& [b, o] : out) check_finite(o.predictions, 1, step);
        auto loss = moad_loss(out, rec->scene.boxes, cfg.loss);
        const double total_loss = ag::scalar(loss.total);
        check_finite(total_loss, 1, step);
        ag::backward(ag::scale(loss.total, inv));
        sums["L_LC"] += loss.branches.at(Branch::kLC).total;
        sums["L_L"] += loss.branches.at(Branch::kL).total;
        sums["L_C"] += loss.branches.at(Branch::kC).total;
        sums["L_total"] += total_loss;
      }
      clip_gradients(params, tc.grad_clip);
      const double lr = scheduled_lr(tc.schedule_stage1, tc.lr_stage1, step, total,
                                     tc.warmup_steps);
      opt.step(params, lr, tc.weight_decay, decays);
      StepRecord rec;
      rec.stage = 1;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = lr;
      for (auto& [k, v] : sums) rec.losses[k] = v * inv;
      result.step_losses.push_back(rec.losses["L_total"]);
      write_log(log, rec);
      if (hooks.on_step) hooks.on_step(rec);
      ++step;
    }
  }
  result.steps = step;
  return result;
}

namespace {

struct CachedScene {
  MoadOutput<float> moad;
};

// Frozen stage-1 outputs as graph-free constants.
CachedScene cache_scene(const Detector<float>& model, const SceneRecord& rec) {
  ag::NoGradGuard guard;
  auto out = model.forward_moad(&rec.geo, &rec.sem, MoadMode::kTrain);
  CachedScene c;
  for (auto& [b, o] : out) {
    BranchOutput<float> k;
    k.features = {ag::constant(o.features.features->value), b};
    k.predictions.branch = b;
    k.predictions.boxes = ag::constant(o.predictions.boxes->value);
    k.predictions.logits = ag::constant(o.predictions.logits->value);
    k.predictions.decoded = ag::constant(o.predictions.decoded->value);
    c.moad.emplace(b, std::move(k));
  }
  return c;
}

}  // namespace

TrainResult train_stage2(Detector<float>& model, const std::vector<SceneRecord>& train,
                         std::ostream* log, const TrainHooks& hooks) {
  const ExperimentConfig& cfg = model.config();
  const TrainConfig& tc = cfg.train;
  if (train.empty()) throw std::invalid_argument("train_stage2: empty dataset");
  const int bs = tc.batch_size;
  const long steps_per_epoch = (static_cast<long>(train.size()) + bs - 1) / bs;
  const long total = steps_per_epoch * tc.stage2_epochs;
  auto params = select_params(model.params(), true);
  TrainResult result;
  if (tc.stage2_epochs == 0) return result;

  std::vector<CachedScene> cache;
  cache.reserve(train.size());
  for (const auto& rec : train) cache.push_back(cache_scene(model, rec));

  AdamW opt;
  long step = 0;
  for (int epoch = 0; epoch < tc.stage2_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), mix_seed(tc.seed, 2), epoch);
    for (long b = 0; b < steps_per_epoch; ++b) {
      model.params().zero_grad();
      const std::size_t begin = static_cast<std::size_t>(b) * bs;
      const std::size_t end = std::min(train.size(), begin + bs);
      const float inv = 1.0f / static_cast<float>(end - begin);
      std::map<std::string, double> sums;
      for (std::size_t i = begin; i < end; ++i) {
        const int idx = order[i];
        auto out = model.forward_pme(cache[idx].moad, tc.pme_bias);
        check_finite(out.predictions, 2, step);
        auto loss = set_loss(out.predictions, train[idx].scene.boxes, cfg.loss);
        check_finite(loss.breakdown.total, 2, step);
        ag::backward(ag::scale(loss.total, inv));
        sums["L_PME"] += loss.breakdown.total;
        sums["L_reg"] += loss.breakdown.reg;
        sums["L_cls"] += loss.breakdown.cls;
      }
      clip_gradients(params, tc.grad_clip);
      const double lr = scheduled_lr(tc.schedule_stage2, tc.lr_stage2, step, total,
                                     tc.warmup_steps);
      opt.step(params, lr, tc.weight_decay, decays);
      StepRecord rec;
      rec.stage = 2;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = lr;
      for (auto& [k, v] : sums) rec.losses[k] = v * inv;
      result.step_losses.push_back(rec.losses["L_PME"]);
      write_log(log, rec);
      if (hooks.on_step) hooks.on_step(rec);
      ++step;
    }
  }
  result.steps = step;
  return result;
}

Checkpoint make_checkpoint(const Detector<float>& model, int stage, long step) {
  Checkpoint c;
  c.stage = stage;
  c.step = step;
  c.config = model.config();
  for (const auto& [name, p] : model.params().all()) c.tensors.emplace(name, p->value);
  return c;
}

void restore(Detector<float>& model, const Checkpoint& ckpt) {
  for (const auto& [name, t] : ckpt.tensors) {
    if (!model.params().contains(name)) {
      throw std::runtime_error("checkpoint: unknown parameter " + name);
    }
    auto p = model.params().get(name);
    if (!p->value.same_shape(t)) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": " +
                               t.shape_str() + " vs " + p->value.shape_str());
    }
    p->value = t;
  }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json manifest;
  manifest["schema_version"] = ckpt.schema_version;
  manifest["stage"] = ckpt.stage;
  manifest["step"] = ckpt.step;
  manifest["config"] = ckpt.config;
  manifest["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& [key, t] : ckpt.tensors) {
    const std::uint64_t nbytes = t.size() * sizeof(float);
    manifest["tensors"].push_back({{"key", key},
                                   {"shape", {t.rows(), t.cols()}},
                                   {"dtype", "f32"},
                                   {"offset", offset},
                                   {"nbytes", nbytes}});
    offset += nbytes;
  }
  std::string out = std::string(kMagic) + "\n" + manifest.dump() + "\n";
  const std::size_t header = out.size();
  out.resize(header + offset);
  std::size_t pos = header;
  for (const auto& [key, t] : ckpt.tensors) {
    std::memcpy(out.data() + pos, t.data(), t.size() * sizeof(float));
    pos += t.size() * sizeof(float);
  }
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  const std::size_t magic_end = bytes.find('\n');
  if (magic_end == std::string::npos || bytes.compare(0, magic_end, kMagic) != 0) {
    throw std::runtime_error("checkpoint: bad header");
  }
  const std::size_t manifest_end = bytes.find('\n', magic_end + 1);
  if (manifest_end == std::string::npos) {
    throw std::runtime_error("checkpoint: truncated manifest");
  }
  json manifest;
  try {
    manifest = json::parse(bytes.substr(magic_end + 1, manifest_end - magic_end - 1));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: bad manifest: ") + e.what());
  }
  Checkpoint c;
  c.schema_version = manifest.at("schema_version").get<int>();
  if (c.schema_version != kCheckpointSchemaVersion) {
    throw std::runtime_error("checkpoint: unsupported schema_version " +
                             std::to_string(c.schema_version));
  }
  c.stage = manifest.at("stage").get<int>();
  c.step = manifest.at("step").get<long>();
  c.config = config_from_json(manifest.at("config"));
  const std::size_t payload = manifest_end + 1;
  const std::size_t available = bytes.size() - payload;
  for (const auto& tj : manifest.at("tensors")) {
    const auto key = tj.at("key").get<std::string>();
    if (tj.at("dtype").get<std::string>() != "f32") {
      throw std::runtime_error("checkpoint: unsupported dtype for " + key);
    }
    const auto shape = tj.at("shape").get<std::vector<int>>();
    const auto offset = tj.at("offset").get<std::uint64_t>();
    const auto nbytes = tj.at("nbytes").get<std::uint64_t>();
    if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
        nbytes != static_cast<std::uint64_t>(shape[0]) * shape[1] * sizeof(float)) {
      throw std::runtime_error("checkpoint: inconsistent shape for " + key);
    }
    if (offset + nbytes > available) {
      throw std::runtime_error("checkpoint: truncated payload for tensor " + key);
    }
    Matrix<float> t(shape[0], shape[1]);
    std::memcpy(t.data(), bytes.data() + payload + offset, nbytes);
    c.tensors.emplace(key, std::move(t));
  }
  return c;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

std::uint64_t parameter_hash(const Detector<float>& model,
                             const std::function<bool(const std::string&)>& select) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, p] : model.params().all()) {
    if (!select(name)) continue;
    mix(name.data(), name.size());
    mix(p->value.data(), p->value.size() * sizeof(float));
  }
  return h;
}

}  // namespace modfuse
