// Copyright 2026 The vxa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vxa/checkpoint.hpp"
#include "vxa/config.hpp"
#include "vxa/domain.hpp"
#include "vxa/errors.hpp"
#include "vxa/fusion_model.hpp"
#include "vxa/optim.hpp"
#include "vxa/random.hpp"
#include "vxa/scoring.hpp"

namespace vxa {

/// Archives, manifest and dev trials a run reads from. Not owning.
struct TrainingData {
  const DatasetManifest* manifest = nullptr;
  const EmbeddingSet* audio = nullptr;
  const EmbeddingSet* text = nullptr;
  const TrialSet* dev_trials = nullptr;
};

struct PoolItem {
  std::string utterance;
  int label = 0;
};

/// Training originals with their class indices. Classes are the distinct
/// speakers of the pool in sorted order.
class TrainingPool {
 public:
  TrainingPool(const TrainingData& data, const TrainConfig& cfg) : data_(data) {
    if (!data.manifest || !data.audio || !data.text) throw ArgumentError("training needs a manifest and both archives");
    const auto tags = admitted_tags(cfg);
    std::vector<const ManifestEntry*> entries;
    std::set<std::string> speakers;
    for (const auto* e : data.manifest->select(Split::train))
      if (tags.empty() || tags.contains(e->source_tag)) {
        entries.push_back(e);
        speakers.insert(e->speaker_id);
      }
    if (entries.empty()) throw ArgumentError("training pool is empty (no train-split utterances in the selected datasets)");
    int next = 0;
    for (const auto& s : speakers) classes_.emplace(s, next++);

    std::vector<std::string> problems;
    const auto variants = cfg.spec_augment() ? std::vector(kAllAugmentations.begin(), kAllAugmentations.end())
                                             : std::vector<Augmentation>{Augmentation::original};
    for (const auto* e : entries) {
      for (Augmentation a : variants)
        if (!data.audio->find(e->speaker_id, e->utterance_id, a))
          problems.push_back("(" + e->utterance_id + ", " + std::string(to_string(a)) + ")");
      if (!data.text->find(e->speaker_id, e->utterance_id, Augmentation::original))
        problems.push_back("(" + e->utterance_id + ", text)");
      items_.push_back({e->utterance_id, classes_.at(e->speaker_id)});
      speaker_of_.push_back(e->speaker_id);
    }
    if (!problems.empty()) {
      std::string msg = "missing training records:";
      for (std::size_t i = 0; i < problems.size() && i < 20; ++i) msg += " " + problems[i];
      if (problems.size() > 20) msg += " ... (" + std::to_string(problems.size()) + " total)";
      throw ArgumentError(msg);
    }
  }

  const std::vector<PoolItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  int n_classes() const { return static_cast<int>(classes_.size()); }
  const std::string& speaker(std::size_t i) const { return speaker_of_[i]; }
  const TrainingData& data() const { return data_; }

  /// Without anonymized_mix only the first listed dataset is used.
  static std::set<std::string> admitted_tags(const TrainConfig& cfg) {
    if (cfg.datasets.empty()) return {};
    if (!cfg.augmentation.contains(AugmentationKind::anonymized_mix)) return {cfg.datasets.front()};
    return {cfg.datasets.begin(), cfg.datasets.end()};
  }

 private:
  TrainingData data_;
  std::vector<PoolItem> items_;
  std::vector<std::string> speaker_of_;
  std::map<std::string, int> classes_;
};

struct Batch {
  nn::Matrix audio;
  nn::Matrix text;
  std::vector<int> labels;
  std::vector<std::string> utterances;
  std::vector<Augmentation> tags;
};

/// Rows for the given pool originals: each original alone, or followed by
/// its three tagged variants when spec_augment is on. Variants share the
/// original's label and text embedding.
inline Batch assemble_batch(const TrainingPool& pool, const TrainConfig& cfg, const std::vector<std::size_t>& originals) {
  const auto& data = pool.data();
  const auto variants = cfg.spec_augment() ? std::vector(kAllAugmentations.begin(), kAllAugmentations.end())
                                           : std::vector<Augmentation>{Augmentation::original};
  const auto rows = static_cast<Eigen::Index>(originals.size() * variants.size());
  Batch b;
  b.audio.resize(rows, data.audio->dimension());
  b.text.resize(rows, data.text->dimension());
  Eigen::Index r = 0;
  for (auto idx : originals) {
    const auto& item = pool.items()[idx];
    const auto& spk = pool.speaker(idx);
    const auto* text = data.text->find(spk, item.utterance, Augmentation::original);
    for (Augmentation a : variants) {
      const auto* rec = data.audio->find(spk, item.utterance, a);
      if (!rec || !text)
        throw ArgumentError("missing record (" + item.utterance + ", " + std::string(to_string(a)) + ")");
      for (std::uint32_t j = 0; j < data.audio->dimension(); ++j) b.audio(r, j) = rec->vector[j];
      for (std::uint32_t j = 0; j < data.text->dimension(); ++j) b.text(r, j) = text->vector[j];
      b.labels.push_back(item.label);
      b.utterances.push_back(item.utterance);
      b.tags.push_back(a);
      ++r;
    }
  }
  return b;
}

/// A batch of distinct originals drawn with `rng`, expanded per the recipe.
inline Batch sample_batch(const TrainingPool& pool, const TrainConfig& cfg, Rng& rng) {
  const auto k = static_cast<std::size_t>(cfg.originals_needed());
  if (pool.size() < k) throw ArgumentError("training pool has fewer originals than one batch needs");
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(order.size() - i - 1)))]);
  order.resize(k);
  return assemble_batch(pool, cfg, order);
}

/// Shuffled pass over the pool cut into full batches; the remainder that
/// cannot fill a batch is dropped.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t pool_size, const TrainConfig& cfg, int epoch) {
  std::vector<std::size_t> order(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(cfg.seed, 0xE90C), static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order.begin(), order.end());
  const auto k = static_cast<std::size_t>(cfg.originals_needed());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start + k <= order.size(); start += k)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(start + k));
  return out;
}

/// Dev-split gender-averaged EER as a proportion, always in fusion mode.
inline double validate(FusionModel& model, const TrainingData& data, const EvalConfig& eval) {
  if (!data.dev_trials) throw ArgumentError("validation needs dev trials");
  EvalConfig cfg = eval;
  cfg.mode = EmbeddingMode::fusion;
  const auto report = evaluate(model, data.audio, data.text, *data.manifest, {SplitTrials{"dev", Split::dev_enroll, *data.dev_trials}}, cfg);
  return report.average("dev") / 100.0;
}

inline std::uint64_t model_init_seed(std::uint64_t seed) { return derive_seed(seed, 0x1417); }

/// Epoch loop with AdamW, the cyclic schedule, per-epoch dev EER and
/// early stopping. Holds the best parameters seen so far.
class Trainer {
 public:
  Trainer(const ModelConfig& model_cfg, const TrainConfig& cfg, const EvalConfig& eval, const TrainingData& data)
      : cfg_(cfg), eval_(eval), data_(data), pool_(data, cfg) {
    cfg_.validate();
    if (!data.dev_trials || data.dev_trials->empty()) throw ArgumentError("training needs a non-empty dev trial list");
    if (model_cfg.n_classes != pool_.n_classes())
      throw ArgumentError("n_classes is " + std::to_string(model_cfg.n_classes) + " but the training pool has " +
                          std::to_string(pool_.n_classes()) + " speakers");
    if (pool_.size() < static_cast<std::size_t>(cfg_.originals_needed()))
      throw ArgumentError("training pool (" + std::to_string(pool_.size()) + " originals) cannot fill one batch of " +
                          std::to_string(cfg_.originals_needed()));
    model_ = std::make_unique<FusionModel>(model_cfg, model_init_seed(cfg_.seed));
    optimizer_ = std::make_unique<nn::AdamW>(model_->parameters(), cfg_.adamw);
    best_params_ = snapshot_parameters(*model_);
  }

  /// Continues from the state saved after some epoch.
  void resume(const Checkpoint& last, const Checkpoint& best) {
    load_parameters(*model_, last.params);
    if (!last.optimizer) throw ArgumentError("resume checkpoint carries no optimizer state");
    optimizer_->load_state(*last.optimizer);
    progress_ = last.progress;
    best_params_ = best.params;
  }

  bool finished() const {
    if (progress_.epochs_done >= cfg_.max_epochs) return true;
    return progress_.epochs_since_improvement > 0 && progress_.epochs_since_improvement >= cfg_.early_stop_patience;
  }

  bool stopped_early() const { return finished() && progress_.epochs_done < cfg_.max_epochs; }

  /// One epoch of updates followed by validation.
  const EpochMetrics& run_epoch() {
    if (finished()) throw ArgumentError("training already finished");
    const int epoch = progress_.epochs_done + 1;
    const auto batches = epoch_batches(pool_.size(), cfg_, epoch);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (const auto& originals : batches) {
      const Batch batch = assemble_batch(pool_, cfg_, originals);
      const auto step = progress_.global_step;
      lr = nn::cyclic_lr(step, cfg_.lr);
      Rng dropout(derive_seed(derive_seed(cfg_.seed, 0xD50), static_cast<std::uint64_t>(step)));
      optimizer_->zero_grad();
      LossBreakdown loss;
      try {
        const auto out = model_->forward(batch.audio, batch.text, nn::Mode::train, dropout);
        loss = model_->loss(out, batch.labels, true);
        optimizer_->step(lr);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + e.what());
      }
      loss_sum += loss.total;
      ++progress_.global_step;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(batches.size());
    m.dev_eer = validate(*model_, data_, eval_);
    m.lr = lr;
    progress_.epochs_done = epoch;
    if (m.dev_eer < progress_.best_eer || progress_.best_epoch == 0) {
      progress_.best_eer = m.dev_eer;
      progress_.best_epoch = epoch;
      progress_.epochs_since_improvement = 0;
      best_params_ = snapshot_parameters(*model_);
    } else {
      ++progress_.epochs_since_improvement;
    }
    progress_.log.push_back(m);
    return progress_.log.back();
  }

  /// Runs until max_epochs or early stopping; `on_epoch` sees every epoch.
  void run(const std::function<void(const Trainer&, const EpochMetrics&)>& on_epoch = {}) {
    while (!finished()) {
      const auto& m = run_epoch();
      if (on_epoch) on_epoch(*this, m);
    }
  }

  /// Current weights, optimizer and progress; what resume needs.
  Checkpoint last_checkpoint() const {
    return Checkpoint{model_->config(), snapshot_parameters(*model_), optimizer_->state(), progress_};
  }

  /// Best-EER weights with the current progress record.
  Checkpoint best_checkpoint() const { return Checkpoint{model_->config(), best_params_, std::nullopt, progress_}; }

  const TrainingProgress& progress() const { return progress_; }
  const TrainingPool& pool() const { return pool_; }
  FusionModel& model() { return *model_; }

 private:
  TrainConfig cfg_;
  EvalConfig eval_;
  TrainingData data_;
  TrainingPool pool_;
  std::unique_ptr<FusionModel> model_;
  std::unique_ptr<nn::AdamW> optimizer_;
  std::vector<std::pair<std::string, nn::Matrix>> best_params_;
  TrainingProgress progress_;
};

inline constexpr std::string_view kMetricHeader = "epoch\ttrain_loss\tdev_eer\tlr";

inline std::string format_metric_log(const std::vector<EpochMetrics>& log) {
  std::string out(kMetricHeader);
  out += '\n';
  char buf[128];
  for (const auto& m : log) {
    std::snprintf(buf, sizeof buf, "%d\t%.9g\t%.6f\t%.9g\n", m.epoch, m.train_loss, m.dev_eer, m.lr);
    out += buf;
  }
  return out;
}

}  // namespace vxa
