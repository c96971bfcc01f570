// src/training.cpp

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


#include "sde/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sde/csv.hpp"
#include "sde/parallel.hpp"

namespace sde {

using nlohmann::json;

namespace {

constexpr double kResidentBudgetBytes = 1.5e9;

}  // namespace

// ------------------------------------------------------------------ config

void TrainConfig::Validate() const {
  if (epochs < 0) throw InvalidInput("epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw InvalidInput("learning_rate must be positive");
  if (batch_size <= 0) throw InvalidInput("batch_size must be positive");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw InvalidInput("lr_decay must lie in (0, 1)");
  if (plateau_patience <= 0) throw InvalidInput("plateau_patience must be positive");
}

json TrainConfig::ToJson() const {
  return {{"epochs", epochs},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"lr_decay", lr_decay},
          {"plateau_patience", plateau_patience},
          {"grad_clip_norm", grad_clip_norm},
          {"seed", seed},
          {"finetune_from", finetune_from}};
}

TrainConfig TrainConfig::FromJson(const json& j) {
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "lr_decay") c.lr_decay = v.get<double>();
    else if (key == "plateau_patience") c.plateau_patience = v.get<int>();
    else if (key == "grad_clip_norm") c.grad_clip_norm = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "finetune_from") c.finetune_from = v.is_null() ? "" : v.get<std::string>();
    else throw InvalidInput("unknown training config key '" + key + "'");
  }
  c.Validate();
  return c;
}

// -------------------------------------------------------------------- loss

template <typename S>
S DualLoss(const Prediction<S>& pred, const VectorX<S>& y) {
  return DualLossGrad(pred, y).loss;
}

template <typename S>
LossGrad<S> DualLossGrad(const Prediction<S>& pred, const VectorX<S>& y) {
  const Index b = y.size();
  if (pred.utterance.size() != b || pred.framewise.rows() != b) {
    throw InvalidInput("loss: prediction and target batch sizes differ");
  }
  if (!pred.utterance.allFinite() || !pred.framewise.allFinite()) {
    throw Error("training diverged: non-finite prediction");
  }
  LossGrad<S> g;
  g.d_utterance = pred.utterance - y;
  g.d_framewise = pred.framewise.colwise() - y;
  g.loss = (g.d_utterance.squaredNorm() + g.d_framewise.squaredNorm()) / static_cast<S>(b);
  const S scale = S(2) / static_cast<S>(b);
  g.d_utterance *= scale;
  g.d_framewise *= scale;
  return g;
}

template <typename S>
double ClipGradNorm(Model<S>& m, double max_norm) {
  double sq = 0.0;
  ForEachParameter(m, [&](const std::string&, Param<S>& p) {
    sq += static_cast<double>(p.grad.squaredNorm());
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / norm);
    ForEachParameter(m, [&](const std::string&, Param<S>& p) { p.grad *= scale; });
  }
  return norm;
}

template <typename S>
Adam<S>::Adam(const Model<S>& m, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  ForEachParameter(m, [&](const std::string&, const Param<S>& p) {
    m_.push_back(MatrixX<S>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(MatrixX<S>::Zero(p.value.rows(), p.value.cols()));
  });
}

template <typename S>
void Adam<S>::Step(Model<S>& model, double lr) {
  ++step_;
  const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
  const S c1 = static_cast<S>(1.0 - std::pow(beta1_, static_cast<double>(step_)));
  const S c2 = static_cast<S>(1.0 - std::pow(beta2_, static_cast<double>(step_)));
  const S rate = static_cast<S>(lr), eps = static_cast<S>(eps_);
  std::size_t i = 0;
  ForEachParameter(model, [&](const std::string&, Param<S>& p) {
    MatrixX<S>& m = m_[i];
    MatrixX<S>& v = v_[i];
    ++i;
    m = b1 * m + (S(1) - b1) * p.grad;
    v = b2 * v + (S(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  });
}

double PlateauScheduler::Step(double metric) {
  if (metric < best_) {
    best_ = metric;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ >= patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
  }
  return lr_;
}

// ------------------------------------------------------------------- data

LabeledSet LabeledSet::FromManifest(const DatasetManifest& manifest, Split split, int fold,
                                    ChannelSubset subset, const std::filesystem::path& cache_dir,
                                    const StftConfig& stft) {
  LabeledSet s;
  s.subset_ = subset;
  s.cache_dir_ = cache_dir;
  s.stft_ = stft;
  for (const DatasetEntry* e : manifest.Select(split, fold)) {
    s.distances_.push_back(e->distance_m);
    s.ids_.push_back(e->id);
    s.entries_.push_back(*e);
    s.clips_.push_back(manifest.ClipPath(*e));
  }
  s.resident_.resize(s.size());
  if (s.empty()) return s;
  if (manifest.duration_s > 0.0) {
    s.frames_ = stft.NumFrames(static_cast<Index>(std::llround(manifest.duration_s * stft.sample_rate_hz)));
  } else {
    s.frames_ = s.Get({0})[0]->frames();
  }
  const double bytes = static_cast<double>(s.size()) * static_cast<double>(s.frames_) *
                       stft.bins() * NumChannels(subset) * sizeof(float);
  s.keep_resident_ = bytes <= kResidentBudgetBytes;
  return s;
}

LabeledSet LabeledSet::FromTensors(std::vector<FeatureTensor<float>> features,
                                   std::vector<double> distances) {
  if (features.size() != distances.size()) {
    throw InvalidInput("feature and label counts differ");
  }
  LabeledSet s;
  s.distances_ = std::move(distances);
  for (std::size_t i = 0; i < features.size(); ++i) {
    s.ids_.push_back("item" + std::to_string(i));
    if (i == 0) s.frames_ = features[0].frames();
    if (features[i].frames() != s.frames_) {
      throw InvalidInput("mixed clip durations in one set are not supported");
    }
    s.resident_.push_back(std::make_shared<const FeatureTensor<float>>(std::move(features[i])));
  }
  if (!s.resident_.empty()) {
    const int c = s.resident_[0]->num_channels();
    s.subset_ = c == 3 ? ChannelSubset::kAll
                       : c == 1 ? ChannelSubset::kMagnitudeOnly : ChannelSubset::kPhaseOnly;
  }
  return s;
}

std::vector<std::shared_ptr<const FeatureTensor<float>>> LabeledSet::Get(
    const std::vector<std::size_t>& idx) const {
  std::vector<std::shared_ptr<const FeatureTensor<float>>> out(idx.size());
  ParallelFor(static_cast<Index>(idx.size()), [&](Index k) {
    const std::size_t i = idx[k];
    if (resident_[i]) {
      out[k] = resident_[i];
      return;
    }
    auto f = std::make_shared<const FeatureTensor<float>>(
        SelectChannels(LoadFeatures(clips_[i], cache_dir_, ids_[i], stft_), subset_));
    if (frames_ != 0 && f->frames() != frames_) {
      throw InvalidInput("clip " + clips_[i].string() + " has " + std::to_string(f->frames()) +
                         " frames, expected " + std::to_string(frames_) +
                         "; mixed clip durations in one set are not supported");
    }
    if (keep_resident_) resident_[i] = f;
    out[k] = std::move(f);
  });
  return out;
}

SetPredictions PredictSet(const Model<float>& m, const LabeledSet& set, int batch_size) {
  SetPredictions p;
  p.utterance.resize(set.size());
  p.framewise.resize(set.size());
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
    const auto feats = set.Get(idx);
    std::vector<const FeatureTensor<float>*> ptrs;
    for (const auto& f : feats) ptrs.push_back(f.get());
    const Prediction<float> pred = Forward(m, StackFeatures<float>(ptrs), false);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      p.utterance[idx[k]] = pred.utterance[k];
      const auto row = pred.framewise.row(k);
      p.framewise[idx[k]].resize(row.size());
      for (Index t = 0; t < row.size(); ++t) p.framewise[idx[k]][t] = row[t];
    }
  }
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double e = p.utterance[i] - set.distance(i);
    se += e * e;
    ae += std::abs(e);
  }
  if (!set.empty()) {
    p.mse = se / set.size();
    p.l1 = ae / set.size();
  }
  return p;
}

// --------------------------------------------------------------- training

std::string EpochLogCsv(const std::vector<EpochLog>& log) {
  CsvTable t;
  t.header = {"epoch", "train_loss", "val_mse", "val_l1", "lr"};
  for (const EpochLog& e : log) {
    t.rows.push_back({std::to_string(e.epoch), FormatDouble(e.train_loss), FormatDouble(e.val_mse),
                      FormatDouble(e.val_l1), FormatDouble(e.lr)});
  }
  return FormatCsv(t);
}

namespace {

void WriteText(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw InvalidInput("cannot write " + tmp.string());
    os << text;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

TrainResult Train(const LabeledSet& train, const LabeledSet& val, ModelConfig model_cfg,
                  const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.Validate();
  if (train.empty()) throw InvalidInput("training split is empty");
  if (val.empty()) throw InvalidInput("validation split is empty");
  if (train.frames() != val.frames()) {
    throw InvalidInput("training and validation clips differ in duration");
  }
  std::filesystem::create_directories(out_dir);
  const std::string extraction_hash = StftConfig().Hash();

  Model<float> model;
  if (!cfg.finetune_from.empty()) {
    Checkpoint<float> ck = LoadCheckpoint<float>(cfg.finetune_from);
    if (ck.model.cfg.frames != train.frames()) {
      throw InvalidInput("checkpoint " + cfg.finetune_from + " expects " +
                         std::to_string(ck.model.cfg.frames) + " frames, the data has " +
                         std::to_string(train.frames()));
    }
    if (ck.model.cfg.features != train.subset()) {
      throw InvalidInput("checkpoint " + cfg.finetune_from + " uses features '" +
                         ToString(ck.model.cfg.features) + "', the data has '" +
                         ToString(train.subset()) + "'");
    }
    if (ck.extraction_hash != extraction_hash) {
      throw InvalidInput("checkpoint " + cfg.finetune_from +
                         " was trained under another feature extraction config");
    }
    model = std::move(ck.model);
  } else {
    model_cfg.frames = train.frames();
    model_cfg.features = train.subset();
    model = MakeModel<float>(model_cfg, cfg.seed);
  }

  TrainResult result;
  result.best_checkpoint = out_dir / "best.ckpt";
  result.last_checkpoint = out_dir / "last.ckpt";
  Adam<float> adam(model);
  PlateauScheduler sched(cfg.learning_rate, cfg.lr_decay, cfg.plateau_patience);

  auto save = [&](const std::filesystem::path& path, int epoch, double lr, double val_mse) {
    TrainingState st;
    st.epoch = epoch;
    st.learning_rate = lr;
    st.val_loss = val_mse;
    st.extra = {{"train_config", cfg.ToJson()}, {"adam_steps", adam.steps()}};
    SaveCheckpoint(path, model, extraction_hash, st);
  };

  const SetPredictions initial = PredictSet(model, val, cfg.batch_size);
  result.log.push_back({0, std::numeric_limits<double>::quiet_NaN(), initial.mse, initial.l1,
                        cfg.learning_rate});
  result.best_val_mse = initial.mse;
  save(result.best_checkpoint, 0, cfg.learning_rate, initial.mse);
  WriteText(out_dir / "train_log.csv", EpochLogCsv(result.log));
  if (on_epoch) on_epoch(result.log.back());

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  ForwardCache<float> cache;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = sched.lr();
    Rng rng(MixSeed(cfg.seed, 0xe70c0000ULL + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::vector<std::size_t> idx(
            order.begin() + start,
            order.begin() + std::min(order.size(), start + cfg.batch_size));
        const auto feats = train.Get(idx);
        std::vector<const FeatureTensor<float>*> ptrs;
        VectorX<float> y(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
          ptrs.push_back(feats[k].get());
          y[k] = static_cast<float>(train.distance(idx[k]));
        }
        ZeroGrad(model);
        const Prediction<float> pred = Forward(model, StackFeatures<float>(ptrs), true, &cache);
        const LossGrad<float> g = DualLossGrad(pred, y);
        Backward(model, cache, pred, g.d_framewise, g.d_utterance);
        UpdateRunningStats(model, cache);
        ClipGradNorm(model, cfg.grad_clip_norm);
        adam.Step(model, lr);
        loss_sum += static_cast<double>(g.loss) * idx.size();
      }
    } catch (const Error& e) {
      if (dynamic_cast<const InvalidInput*>(&e)) throw;
      result.diverged = true;
      WriteText(out_dir / "train_log.csv", EpochLogCsv(result.log));
      throw Error(std::string(e.what()) + " at epoch " + std::to_string(epoch) + "; " +
                  result.best_checkpoint.string() + " holds the last good weights");
    }
    const SetPredictions v = PredictSet(model, val, cfg.batch_size);
    result.log.push_back({epoch, loss_sum / train.size(), v.mse, v.l1, lr});
    sched.Step(v.mse);
    if (v.mse < result.best_val_mse) {
      result.best_val_mse = v.mse;
      result.best_epoch = epoch;
      save(result.best_checkpoint, epoch, sched.lr(), v.mse);
    }
    WriteText(out_dir / "train_log.csv", EpochLogCsv(result.log));
    if (on_epoch) on_epoch(result.log.back());
  }
  save(result.last_checkpoint, cfg.epochs, sched.lr(), result.log.back().val_mse);
  return result;
}

std::string SnrKey(double snr_db) {
  return std::isinf(snr_db) ? std::string("clean") : FormatDouble(snr_db);
}

FamilyResult TrainSnrFamily(const std::map<double, std::filesystem::path>& manifests,
                            const std::vector<double>& snr_list, const ModelConfig& model_cfg,
                            const TrainConfig& cfg, int fold, const std::filesystem::path& out_dir) {
  FamilyResult fam;
  json index = json::object();
  std::filesystem::create_directories(out_dir);
  for (double snr : snr_list) {
    const auto it = manifests.find(snr);
    if (it == manifests.end() || !std::filesystem::exists(it->second)) {
      fam.skipped.push_back(snr);
      continue;
    }
    const DatasetManifest m = ReadManifest(it->second);
    const std::filesystem::path cache = m.root / "features";
    const LabeledSet train = LabeledSet::FromManifest(m, Split::kTrain, fold, model_cfg.features, cache);
    const LabeledSet val = LabeledSet::FromManifest(m, Split::kVal, fold, model_cfg.features, cache);
    const std::filesystem::path dir = out_dir / ("snr_" + SnrKey(snr));
    const TrainResult r = Train(train, val, model_cfg, cfg, dir);
    fam.checkpoints[snr] = r.best_checkpoint;
    index[SnrKey(snr)] = std::filesystem::relative(r.best_checkpoint, out_dir).string();
  }
  json skipped = json::array();
  for (double s : fam.skipped) skipped.push_back(SnrKey(s));
  WriteText(out_dir / "family.json",
            json{{"checkpoints", index}, {"skipped", skipped}}.dump(2) + "\n");
  return fam;
}

template float DualLoss<float>(const Prediction<float>&, const VectorX<float>&);
template double DualLoss<double>(const Prediction<double>&, const VectorX<double>&);
template LossGrad<float> DualLossGrad<float>(const Prediction<float>&, const VectorX<float>&);
template LossGrad<double> DualLossGrad<double>(const Prediction<double>&, const VectorX<double>&);
template double ClipGradNorm<float>(Model<float>&, double);
template double ClipGradNorm<double>(Model<double>&, double);
template class Adam<float>;
template class Adam<double>;

}  // namespace sde
