// sde/model.hpp

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


// Attention CRNN distance regressor with hand-written backpropagation.
//
// Activations travel as FeatureMap: one matrix whose rows enumerate
// (sample, frame, bin) with the bin fastest and whose columns are channels.
// Every layer is a plain struct of parameters plus free Forward/Backward
// functions; Forward is const and fills an optional cache, Backward
// accumulates parameter gradients and returns the input gradient.

#ifndef SDE_MODEL_HPP_
#define SDE_MODEL_HPP_

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sde/core.hpp"
#include "sde/features.hpp"

namespace sde {

enum class KernelShape { kTime, kSquare, kFrequency };  // 3x1, 3x3, 1x3
enum class AttentionMode { kNone, kSpectrogramOnly, kAllChannels };

std::string ToString(KernelShape k);
KernelShape KernelShapeFromString(const std::string& s);
std::string ToString(AttentionMode a);
AttentionMode AttentionModeFromString(const std::string& s);

struct ModelConfig {
  KernelShape kernel = KernelShape::kFrequency;
  int recurrent_layers = 2;
  AttentionMode attention = AttentionMode::kAllChannels;
  ChannelSubset features = ChannelSubset::kAll;
  std::array<int, 3> conv_filters{8, 32, 128};
  std::array<int, 3> freq_pool{8, 8, 2};
  std::array<int, 2> attention_filters{16, 64};
  int recurrent_width = 128;  // per direction
  int head_width = 128;
  double elu_alpha = 1.0;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  Index frames = 624;  // the utterance head maps exactly this many frames
  Index bins = kStftBins;

  int input_channels() const { return NumChannels(features); }
  int map_channels() const {
    return attention == AttentionMode::kSpectrogramOnly ? 1 : input_channels();
  }
  Index pooled_bins() const;
  int recurrent_input() const { return static_cast<int>(pooled_bins()) * conv_filters[2]; }
  int temporal_width() const {
    return recurrent_layers > 0 ? 2 * recurrent_width : recurrent_input();
  }
  int kernel_frames() const { return kernel == KernelShape::kFrequency ? 1 : 3; }
  int kernel_bins() const { return kernel == KernelShape::kTime ? 1 : 3; }

  // Throws InvalidInput on inconsistent settings.
  void Validate() const;
  nlohmann::json ToJson() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ModelConfig FromJson(const nlohmann::json& j);
  // Every dimension halved (filters, attention, recurrent and head widths).
  ModelConfig HalfWidth() const;
};

template <typename S>
struct FeatureMap {
  MatrixX<S> data;
  Index batch = 0;
  Index frames = 0;
  Index bins = 0;

  Index channels() const { return data.cols(); }
};

// Stacks same-shape feature tensors into a batch.
template <typename S>
FeatureMap<S> StackFeatures(const std::vector<const FeatureTensor<float>*>& items);

// Channel `c` of sample `s` as a frames x bins matrix.
template <typename S>
MatrixX<S> ChannelImage(const FeatureMap<S>& x, Index s, Index c);

template <typename S>
struct Param {
  MatrixX<S> value;
  MatrixX<S> grad;

  void Resize(Index rows, Index cols) {
    value = MatrixX<S>::Zero(rows, cols);
    grad = MatrixX<S>::Zero(rows, cols);
  }
};

template <typename S>
struct Conv2d {
  int kt = 1, kf = 1, cin = 0, cout = 0;
  Param<S> w;  // (kt * kf * cin) x cout, tap (a, b) at rows (a * kf + b) * cin
  Param<S> b;  // 1 x cout
};

template <typename S>
struct BatchNorm {
  Param<S> gamma, beta;
  MatrixX<S> running_mean, running_var;  // 1 x C
  double momentum = 0.1;
  double eps = 1e-5;
};

template <typename S>
struct Linear {
  Param<S> w;  // in x out
  Param<S> b;  // 1 x out
};

template <typename S>
struct GruDirection {
  Param<S> wi, wh;  // in x 3H, H x 3H; gate order r, z, n
  Param<S> bi, bh;  // 1 x 3H
};

template <typename S>
struct BiGru {
  GruDirection<S> fwd, bwd;
};

template <typename S>
struct ConvBlock {
  Conv2d<S> conv;
  BatchNorm<S> bn;
  int pool = 1;
};

template <typename S>
struct Attention {
  ConvBlock<S> block1, block2;  // pool = 1
  Conv2d<S> out;                // 1x1 to the map channels
};

template <typename S>
struct Model {
  ModelConfig cfg;
  Attention<S> attention;  // empty when cfg.attention == kNone
  std::array<ConvBlock<S>, 3> blocks;
  std::vector<BiGru<S>> recurrent;
  Linear<S> frame_hidden, frame_out, utterance;
};

// Seeded uniform fan-in initialization.
template <typename S>
Model<S> MakeModel(const ModelConfig& cfg, std::uint64_t seed);

template <typename ModelT, typename Fn>
void ForEachParameter(ModelT& m, Fn&& fn) {
  auto conv = [&](const std::string& p, auto& c) {
    fn(p + ".weight", c.w);
    fn(p + ".bias", c.b);
  };
  auto block = [&](const std::string& p, auto& b) {
    conv(p + ".conv", b.conv);
    fn(p + ".bn.gamma", b.bn.gamma);
    fn(p + ".bn.beta", b.bn.beta);
  };
  auto gru = [&](const std::string& p, auto& d) {
    fn(p + ".w_input", d.wi);
    fn(p + ".w_hidden", d.wh);
    fn(p + ".b_input", d.bi);
    fn(p + ".b_hidden", d.bh);
  };
  if (m.cfg.attention != AttentionMode::kNone) {
    block("attention.block1", m.attention.block1);
    block("attention.block2", m.attention.block2);
    conv("attention.out", m.attention.out);
  }
  for (std::size_t i = 0; i < m.blocks.size(); ++i) block("conv" + std::to_string(i + 1), m.blocks[i]);
  for (std::size_t i = 0; i < m.recurrent.size(); ++i) {
    gru("gru" + std::to_string(i + 1) + ".fwd", m.recurrent[i].fwd);
    gru("gru" + std::to_string(i + 1) + ".bwd", m.recurrent[i].bwd);
  }
  fn(std::string("head.frame_hidden.weight"), m.frame_hidden.w);
  fn(std::string("head.frame_hidden.bias"), m.frame_hidden.b);
  fn(std::string("head.frame_out.weight"), m.frame_out.w);
  fn(std::string("head.frame_out.bias"), m.frame_out.b);
  fn(std::string("head.utterance.weight"), m.utterance.w);
  fn(std::string("head.utterance.bias"), m.utterance.b);
}

// Batch-norm running statistics.
template <typename ModelT, typename Fn>
void ForEachBuffer(ModelT& m, Fn&& fn) {
  auto block = [&](const std::string& p, auto& b) {
    fn(p + ".bn.running_mean", b.bn.running_mean);
    fn(p + ".bn.running_var", b.bn.running_var);
  };
  if (m.cfg.attention != AttentionMode::kNone) {
    block("attention.block1", m.attention.block1);
    block("attention.block2", m.attention.block2);
  }
  for (std::size_t i = 0; i < m.blocks.size(); ++i) block("conv" + std::to_string(i + 1), m.blocks[i]);
}

struct ParameterCounts {
  Index attention = 0;
  Index conv = 0;
  Index recurrent = 0;
  Index heads = 0;
  Index total() const { return attention + conv + recurrent + heads; }
};

ParameterCounts CountParameters(const ModelConfig& cfg);

// ------------------------------------------------------------ layer ops

template <typename S>
S Elu(S x, S alpha) {
  return x >= S(0) ? x : alpha * (std::exp(x) - S(1));
}

template <typename S>
struct ConvCache {
  MatrixX<S> padded;
  Index batch = 0, frames = 0, bins = 0;
};

template <typename S>
FeatureMap<S> Forward(const Conv2d<S>& c, const FeatureMap<S>& x, ConvCache<S>* cache = nullptr);
template <typename S>
FeatureMap<S> Backward(Conv2d<S>& c, const ConvCache<S>& cache, const FeatureMap<S>& dy,
                       bool need_dx = true);

template <typename S>
struct BnCache {
  MatrixX<S> xhat;
  MatrixX<S> inv_std;  // 1 x C
  MatrixX<S> mean, var;  // batch statistics (training only)
  bool training = false;
};

template <typename S>
MatrixX<S> Forward(const BatchNorm<S>& bn, const MatrixX<S>& x, bool training,
                   BnCache<S>* cache = nullptr);
template <typename S>
MatrixX<S> Backward(BatchNorm<S>& bn, const BnCache<S>& cache, const MatrixX<S>& dy);

// Max plus average pooling over `k` adjacent bins; trailing bins dropped.
template <typename S>
struct PoolCache {
  std::vector<unsigned char> argmax;
  Index in_bins = 0;
};

template <typename S>
FeatureMap<S> PoolForward(const FeatureMap<S>& x, int k, PoolCache<S>* cache = nullptr);
template <typename S>
FeatureMap<S> PoolBackward(const PoolCache<S>& cache, const FeatureMap<S>& dy, int k);

// Sequences are time-major: rows (frame, sample).
template <typename S>
struct GruCache {
  MatrixX<S> x, r, z, n, gn, hprev;
};

template <typename S>
MatrixX<S> Forward(const GruDirection<S>& g, const MatrixX<S>& x, Index batch, bool reverse,
                   GruCache<S>* cache = nullptr);
template <typename S>
MatrixX<S> Backward(GruDirection<S>& g, const GruCache<S>& cache, const MatrixX<S>& dh,
                    Index batch, bool reverse);

template <typename S>
struct BiGruCache {
  GruCache<S> fwd, bwd;
};

template <typename S>
MatrixX<S> Forward(const BiGru<S>& g, const MatrixX<S>& x, Index batch,
                   BiGruCache<S>* cache = nullptr);
template <typename S>
MatrixX<S> Backward(BiGru<S>& g, const BiGruCache<S>& cache, const MatrixX<S>& dy, Index batch);

// ---------------------------------------------------------- whole model

template <typename S>
struct Prediction {
  MatrixX<S> framewise;  // batch x frames
  VectorX<S> utterance;  // batch
  std::optional<FeatureMap<S>> attention_map;
};

template <typename S>
struct BlockCache {
  ConvCache<S> conv;
  BnCache<S> bn;
  PoolCache<S> pool;
  MatrixX<S> act;  // ELU output
};

template <typename S>
struct ForwardCache {
  FeatureMap<S> input;
  BlockCache<S> att1, att2;
  ConvCache<S> att_out;
  std::array<BlockCache<S>, 3> blocks;
  Index pooled_bins = 0;
  std::vector<BiGruCache<S>> recurrent;
  MatrixX<S> temporal;  // heads input, rows (sample, frame)
  MatrixX<S> hidden;    // frame_hidden output
};

// Throws InvalidInput when `x` does not match the configuration.
// training = true normalizes with batch statistics (they are left in the
// cache; see UpdateRunningStats).
template <typename S>
Prediction<S> Forward(const Model<S>& m, const FeatureMap<S>& x, bool training,
                      ForwardCache<S>* cache = nullptr);

// Accumulates parameter gradients for the given output gradients.
template <typename S>
void Backward(Model<S>& m, const ForwardCache<S>& cache, const Prediction<S>& pred,
              const MatrixX<S>& d_framewise, const VectorX<S>& d_utterance);

template <typename S>
void ZeroGrad(Model<S>& m);

template <typename S>
void UpdateRunningStats(Model<S>& m, const ForwardCache<S>& cache);

// Inference on one feature tensor.
template <typename S>
Prediction<S> Predict(const Model<S>& m, const FeatureTensor<float>& x);

template <typename To, typename From>
Model<To> CastModel(const Model<From>& m);

// ----------------------------------------------------------- checkpoint

struct TrainingState {
  int epoch = 0;
  double learning_rate = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  std::string optimizer = "adam(beta1=0.9,beta2=0.999,eps=1e-8)";
  nlohmann::json extra = nlohmann::json::object();
};

template <typename S>
struct Checkpoint {
  Model<S> model;
  std::string extraction_hash;
  TrainingState state;
};

// "SDECKPT1", u64 header length, JSON header (config, hashes, state,
// tensor index), then raw little-endian tensors in the stored dtype.
template <typename S>
void SaveCheckpoint(const std::filesystem::path& path, const Model<S>& m,
                    const std::string& extraction_hash, const TrainingState& state);
// Tensors are converted to S when the stored dtype differs.
template <typename S>
Checkpoint<S> LoadCheckpoint(const std::filesystem::path& path);

}  // namespace sde

#endif  // SDE_MODEL_HPP_
