// sde/training.hpp

// Copyright 2026  The sdelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Dual utterance/frame loss, Adam with global-norm clipping, the plateau
// learning-rate schedule, and the epoch loop with checkpointing.

#ifndef SDE_TRAINING_HPP_
#define SDE_TRAINING_HPP_

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sde/features.hpp"
#include "sde/model.hpp"
#include "sde/scenegen.hpp"

namespace sde {

struct TrainConfig {
  int epochs = 60;
  double learning_rate = 1e-3;
  int batch_size = 16;
  double lr_decay = 0.8;
  int plateau_patience = 5;
  double grad_clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  std::string finetune_from;  // checkpoint path, empty for fresh weights

  void Validate() const;
  nlohmann::json ToJson() const;
  // Unknown keys are rejected.
  static TrainConfig FromJson(const nlohmann::json& j);
};

// Mean over the batch of (y - yhat)^2 + ||y_t - yhat_t||^2 with y_t = y.
// Throws Error when a prediction is not finite.
template <typename S>
S DualLoss(const Prediction<S>& pred, const VectorX<S>& y);

template <typename S>
struct LossGrad {
  S loss = 0;
  MatrixX<S> d_framewise;
  VectorX<S> d_utterance;
};

template <typename S>
LossGrad<S> DualLossGrad(const Prediction<S>& pred, const VectorX<S>& y);

// Scales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
template <typename S>
double ClipGradNorm(Model<S>& m, double max_norm);

template <typename S>
class Adam {
 public:
  explicit Adam(const Model<S>& m, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void Step(Model<S>& m, double lr);
  long steps() const { return step_; }

 private:
  double beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<MatrixX<S>> m_, v_;
};

// Multiplies the rate by `factor` after `patience` consecutive epochs
// without a strict improvement; the counter restarts after each cut.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience)
      : lr_(lr), factor_(factor), patience_(patience) {}
  // Feeds one epoch's validation metric, returns the rate for the next.
  double Step(double metric);
  double lr() const { return lr_; }
  double best() const { return best_; }

 private:
  double lr_, factor_;
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

// Clips with labels; features load lazily and stay resident while they
// fit the memory budget.
class LabeledSet {
 public:
  LabeledSet() = default;
  // Entries of `split` (fold `fold`), features restricted to `subset`.
  // A non-empty `cache_dir` keeps extracted features on disk.
  static LabeledSet FromManifest(const DatasetManifest& manifest, Split split, int fold,
                                 ChannelSubset subset, const std::filesystem::path& cache_dir,
                                 const StftConfig& stft = {});
  // In-memory set, mainly for tests.
  static LabeledSet FromTensors(std::vector<FeatureTensor<float>> features,
                                std::vector<double> distances);

  std::size_t size() const { return distances_.size(); }
  bool empty() const { return distances_.empty(); }
  double distance(std::size_t i) const { return distances_[i]; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const DatasetEntry* entry(std::size_t i) const { return entries_.empty() ? nullptr : &entries_[i]; }
  Index frames() const { return frames_; }
  ChannelSubset subset() const { return subset_; }

  // Features of items `idx` (loaded in parallel when not resident).
  std::vector<std::shared_ptr<const FeatureTensor<float>>> Get(const std::vector<std::size_t>& idx) const;

 private:
  std::vector<double> distances_;
  std::vector<std::string> ids_;
  std::vector<DatasetEntry> entries_;
  std::vector<std::filesystem::path> clips_;
  std::filesystem::path cache_dir_;
  StftConfig stft_;
  ChannelSubset subset_ = ChannelSubset::kAll;
  Index frames_ = 0;
  mutable std::vector<std::shared_ptr<const FeatureTensor<float>>> resident_;
  bool keep_resident_ = true;
};

struct SetPredictions {
  std::vector<double> utterance;
  std::vector<std::vector<double>> framewise;
  double mse = 0.0;  // utterance-level
  double l1 = 0.0;
};

// Inference-mode predictions in dataset order.
SetPredictions PredictSet(const Model<float>& m, const LabeledSet& set, int batch_size = 16);

struct EpochLog {
  int epoch = 0;             // 0: evaluation before any update
  double train_loss = 0.0;   // NaN at epoch 0
  double val_mse = 0.0;
  double val_l1 = 0.0;
  double lr = 0.0;           // rate used during the epoch
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  int best_epoch = 0;
  double best_val_mse = 0.0;
  bool diverged = false;
};

std::string EpochLogCsv(const std::vector<EpochLog>& log);

// Writes best.ckpt, last.ckpt and train_log.csv under `out_dir`. The model
// frame count follows the data. Throws InvalidInput on empty splits or a
// fine-tuning checkpoint that does not fit the data, Error on divergence
// (best.ckpt then holds the last good weights).
TrainResult Train(const LabeledSet& train, const LabeledSet& val, ModelConfig model_cfg,
                  const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

struct FamilyResult {
  std::map<double, std::filesystem::path> checkpoints;  // SNR -> best.ckpt
  std::vector<double> skipped;                           // SNRs without a dataset
};

// One model per SNR, each trained from scratch on its own manifest.
// Writes family.json mapping SNR to checkpoint.
FamilyResult TrainSnrFamily(const std::map<double, std::filesystem::path>& manifests,
                            const std::vector<double>& snr_list, const ModelConfig& model_cfg,
                            const TrainConfig& cfg, int fold, const std::filesystem::path& out_dir);

std::string SnrKey(double snr_db);  // "clean" for +inf, else shortest decimal

}  // namespace sde

#endif  // SDE_TRAINING_HPP_
