// src/model.cpp

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


#include "sde/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace sde {

using nlohmann::json;

// ------------------------------------------------------------------ config

std::string ToString(KernelShape k) {
  switch (k) {
    case KernelShape::kTime: return "time";
    case KernelShape::kSquare: return "square";
    case KernelShape::kFrequency: return "frequency";
  }
  return "";
}

KernelShape KernelShapeFromString(const std::string& s) {
  if (s == "time") return KernelShape::kTime;
  if (s == "square") return KernelShape::kSquare;
  if (s == "frequency") return KernelShape::kFrequency;
  throw InvalidInput("unknown kernel shape '" + s + "' (expected time, square or frequency)");
}

std::string ToString(AttentionMode a) {
  switch (a) {
    case AttentionMode::kNone: return "none";
    case AttentionMode::kSpectrogramOnly: return "spectrogram_only";
    case AttentionMode::kAllChannels: return "all_channels";
  }
  return "";
}

AttentionMode AttentionModeFromString(const std::string& s) {
  if (s == "none") return AttentionMode::kNone;
  if (s == "spectrogram_only") return AttentionMode::kSpectrogramOnly;
  if (s == "all_channels") return AttentionMode::kAllChannels;
  throw InvalidInput("unknown attention mode '" + s +
                     "' (expected none, spectrogram_only or all_channels)");
}

Index ModelConfig::pooled_bins() const {
  Index f = bins;
  for (int k : freq_pool) f /= k;
  return f;
}

void ModelConfig::Validate() const {
  if (recurrent_layers < 0 || recurrent_layers > 2) {
    throw InvalidInput("recurrent_layers must be 0, 1 or 2");
  }
  for (int p : conv_filters) {
    if (p <= 0) throw InvalidInput("conv_filters must be positive");
  }
  for (int p : attention_filters) {
    if (p <= 0) throw InvalidInput("attention_filters must be positive");
  }
  for (int k : freq_pool) {
    if (k <= 0 || k > 255) throw InvalidInput("freq_pool entries must lie in [1, 255]");
  }
  if (recurrent_width <= 0 || head_width <= 0) {
    throw InvalidInput("recurrent_width and head_width must be positive");
  }
  if (frames <= 0 || bins <= 0) throw InvalidInput("frames and bins must be positive");
  if (pooled_bins() < 1) throw InvalidInput("frequency pooling leaves no bins");
  if (!(elu_alpha > 0.0)) throw InvalidInput("elu_alpha must be positive");
  if (attention == AttentionMode::kSpectrogramOnly && features == ChannelSubset::kPhaseOnly) {
    throw InvalidInput("spectrogram_only attention needs the magnitude channel");
  }
}

json ModelConfig::ToJson() const {
  return {{"kernel_shape", ToString(kernel)},
          {"num_recurrent_layers", recurrent_layers},
          {"attention_mode", ToString(attention)},
          {"features", ToString(features)},
          {"conv_filters", conv_filters},
          {"freq_pool", freq_pool},
          {"attention_filters", attention_filters},
          {"recurrent_width", recurrent_width},
          {"head_width", head_width},
          {"elu_alpha", elu_alpha},
          {"bn_momentum", bn_momentum},
          {"bn_eps", bn_eps},
          {"frames", frames},
          {"bins", bins}};
}

ModelConfig ModelConfig::FromJson(const json& j) {
  ModelConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "kernel_shape") c.kernel = KernelShapeFromString(v.get<std::string>());
    else if (key == "num_recurrent_layers") c.recurrent_layers = v.get<int>();
    else if (key == "attention_mode") c.attention = AttentionModeFromString(v.get<std::string>());
    else if (key == "features") c.features = ChannelSubsetFromString(v.get<std::string>());
    else if (key == "conv_filters") c.conv_filters = v.get<std::array<int, 3>>();
    else if (key == "freq_pool") c.freq_pool = v.get<std::array<int, 3>>();
    else if (key == "attention_filters") c.attention_filters = v.get<std::array<int, 2>>();
    else if (key == "recurrent_width") c.recurrent_width = v.get<int>();
    else if (key == "head_width") c.head_width = v.get<int>();
    else if (key == "elu_alpha") c.elu_alpha = v.get<double>();
    else if (key == "bn_momentum") c.bn_momentum = v.get<double>();
    else if (key == "bn_eps") c.bn_eps = v.get<double>();
    else if (key == "frames") c.frames = v.get<Index>();
    else if (key == "bins") c.bins = v.get<Index>();
    else throw InvalidInput("unknown model config key '" + key + "'");
  }
  c.Validate();
  return c;
}

ModelConfig ModelConfig::HalfWidth() const {
  ModelConfig c = *this;
  for (int& p : c.conv_filters) p = std::max(1, p / 2);
  for (int& p : c.attention_filters) p = std::max(1, p / 2);
  c.recurrent_width = std::max(1, recurrent_width / 2);
  c.head_width = std::max(1, head_width / 2);
  return c;
}

// ---------------------------------------------------------------- helpers

template <typename S>
FeatureMap<S> StackFeatures(const std::vector<const FeatureTensor<float>*>& items) {
  FeatureMap<S> x;
  if (items.empty()) return x;
  const FeatureTensor<float>& first = *items[0];
  x.batch = static_cast<Index>(items.size());
  x.frames = first.frames();
  x.bins = first.bins();
  const Index per = x.frames * x.bins;
  x.data.resize(x.batch * per, first.num_channels());
  for (Index s = 0; s < x.batch; ++s) {
    const FeatureTensor<float>& f = *items[s];
    if (f.frames() != x.frames || f.bins() != x.bins || f.num_channels() != x.channels()) {
      throw InvalidInput("feature tensors in one batch differ in shape");
    }
    for (Index c = 0; c < x.channels(); ++c) {
      // Row-major (frame, bin) order is the transpose's column-major order.
      const MatrixX<S> tr = f.channels[c].transpose().template cast<S>();
      x.data.col(c).segment(s * per, per) = Eigen::Map<const VectorX<S>>(tr.data(), per);
    }
  }
  return x;
}

template <typename S>
MatrixX<S> ChannelImage(const FeatureMap<S>& x, Index s, Index c) {
  const Index per = x.frames * x.bins;
  const VectorX<S> v = x.data.col(c).segment(s * per, per);
  return Eigen::Map<const MatrixX<S>>(v.data(), x.bins, x.frames).transpose();
}

namespace {

template <typename S>
void InitUniform(Param<S>& p, Index rows, Index cols, double bound, Rng& rng) {
  p.Resize(rows, cols);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) p.value(i, j) = static_cast<S>(u(rng));
  }
}

template <typename S>
void InitConv(Conv2d<S>& c, int kt, int kf, int cin, int cout, Rng& rng) {
  c.kt = kt;
  c.kf = kf;
  c.cin = cin;
  c.cout = cout;
  const double bound = 1.0 / std::sqrt(static_cast<double>(kt * kf * cin));
  InitUniform(c.w, kt * kf * cin, cout, bound, rng);
  InitUniform(c.b, 1, cout, bound, rng);
}

template <typename S>
void InitBn(BatchNorm<S>& bn, int channels, const ModelConfig& cfg) {
  bn.gamma.Resize(1, channels);
  bn.gamma.value.setOnes();
  bn.beta.Resize(1, channels);
  bn.running_mean = MatrixX<S>::Zero(1, channels);
  bn.running_var = MatrixX<S>::Ones(1, channels);
  bn.momentum = cfg.bn_momentum;
  bn.eps = cfg.bn_eps;
}

template <typename S>
void InitLinear(Linear<S>& l, Index in, Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  InitUniform(l.w, in, out, bound, rng);
  InitUniform(l.b, 1, out, bound, rng);
}

template <typename S>
void InitGru(GruDirection<S>& g, int in, int hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  InitUniform(g.wi, in, 3 * hidden, bound, rng);
  InitUniform(g.wh, hidden, 3 * hidden, bound, rng);
  InitUniform(g.bi, 1, 3 * hidden, bound, rng);
  InitUniform(g.bh, 1, 3 * hidden, bound, rng);
}

template <typename S>
MatrixX<S> EluForward(const MatrixX<S>& x, S alpha) {
  return (x.array() >= S(0)).select(x.array(), alpha * (x.array().exp() - S(1))).matrix();
}

// Gradient through ELU from its output y.
template <typename S>
MatrixX<S> EluBackward(const MatrixX<S>& y, const MatrixX<S>& dy, S alpha) {
  return (y.array() > S(0)).select(dy.array(), dy.array() * (y.array() + alpha)).matrix();
}

template <typename S>
MatrixX<S> Sigmoid(const MatrixX<S>& x) {
  return ((-x.array()).exp() + S(1)).inverse().matrix();
}

}  // namespace

template <typename S>
Model<S> MakeModel(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  Model<S> m;
  m.cfg = cfg;
  Rng rng(MixSeed(seed, 0x30de1));
  const int c_in = cfg.input_channels();
  if (cfg.attention != AttentionMode::kNone) {
    const auto& af = cfg.attention_filters;
    InitConv(m.attention.block1.conv, 3, 3, c_in, af[0], rng);
    InitBn(m.attention.block1.bn, af[0], cfg);
    InitConv(m.attention.block2.conv, 3, 3, af[0], af[1], rng);
    InitBn(m.attention.block2.bn, af[1], cfg);
    InitConv(m.attention.out, 1, 1, af[1], cfg.map_channels(), rng);
  }
  int prev = c_in;
  for (int i = 0; i < 3; ++i) {
    InitConv(m.blocks[i].conv, cfg.kernel_frames(), cfg.kernel_bins(), prev, cfg.conv_filters[i],
             rng);
    InitBn(m.blocks[i].bn, cfg.conv_filters[i], cfg);
    m.blocks[i].pool = cfg.freq_pool[i];
    prev = cfg.conv_filters[i];
  }
  int width = cfg.recurrent_input();
  m.recurrent.resize(cfg.recurrent_layers);
  for (auto& layer : m.recurrent) {
    InitGru(layer.fwd, width, cfg.recurrent_width, rng);
    InitGru(layer.bwd, width, cfg.recurrent_width, rng);
    width = 2 * cfg.recurrent_width;
  }
  InitLinear(m.frame_hidden, width, cfg.head_width, rng);
  InitLinear(m.frame_out, cfg.head_width, 1, rng);
  InitLinear(m.utterance, cfg.frames, 1, rng);
  return m;
}

ParameterCounts CountParameters(const ModelConfig& cfg) {
  const Model<float> m = MakeModel<float>(cfg, 0);
  ParameterCounts c;
  ForEachParameter(m, [&](const std::string& name, const Param<float>& p) {
    const Index n = p.value.size();
    if (name.rfind("attention.", 0) == 0) c.attention += n;
    else if (name.rfind("conv", 0) == 0) c.conv += n;
    else if (name.rfind("gru", 0) == 0) c.recurrent += n;
    else c.heads += n;
  });
  return c;
}

// ------------------------------------------------------------------- conv

namespace {

// Rows of the wide output are processed in chunks small enough for cache.
constexpr Index kConvChunkRows = 2048;

// Gathers the kernel taps of `rows` wide-output rows into one matrix.
template <typename S>
void Im2Col(const Conv2d<S>& c, const MatrixX<S>& padded, Index start, Index rows, Index fp,
            MatrixX<S>& col) {
  col.resize(rows, static_cast<Index>(c.kt) * c.kf * c.cin);
  for (int a = 0; a < c.kt; ++a) {
    for (int b = 0; b < c.kf; ++b) {
      col.middleCols((a * c.kf + b) * c.cin, c.cin) = padded.middleRows(start + a * fp + b, rows);
    }
  }
}

}  // namespace

template <typename S>
FeatureMap<S> Forward(const Conv2d<S>& c, const FeatureMap<S>& x, ConvCache<S>* cache) {
  if (x.channels() != c.cin) {
    throw InvalidInput("conv expects " + std::to_string(c.cin) + " input channels, got " +
                       std::to_string(x.channels()));
  }
  FeatureMap<S> y;
  y.batch = x.batch;
  y.frames = x.frames;
  y.bins = x.bins;
  if (c.kt == 1 && c.kf == 1) {
    y.data.noalias() = x.data * c.w.value;
    y.data.rowwise() += c.b.value.row(0);
    if (cache) *cache = {x.data, x.batch, x.frames, x.bins};
    return y;
  }
  const Index pt = (c.kt - 1) / 2, pf = (c.kf - 1) / 2;
  const Index tp = x.frames + 2 * pt, fp = x.bins + 2 * pf;
  const Index wide = x.batch * tp * fp;
  MatrixX<S> padded = MatrixX<S>::Zero(wide + 2 * pt * fp + 2 * pf, c.cin);
  for (Index s = 0; s < x.batch; ++s) {
    for (Index t = 0; t < x.frames; ++t) {
      padded.middleRows(pf + s * tp * fp + (t + pt) * fp + pf, x.bins) =
          x.data.middleRows((s * x.frames + t) * x.bins, x.bins);
    }
  }
  MatrixX<S> out(wide, c.cout);
  MatrixX<S> col;
  for (Index start = 0; start < wide; start += kConvChunkRows) {
    const Index rows = std::min(kConvChunkRows, wide - start);
    Im2Col(c, padded, start, rows, fp, col);
    out.middleRows(start, rows).noalias() = col * c.w.value;
  }
  y.data.resize(x.data.rows(), c.cout);
  for (Index s = 0; s < x.batch; ++s) {
    for (Index t = 0; t < x.frames; ++t) {
      y.data.middleRows((s * x.frames + t) * x.bins, x.bins) =
          out.middleRows(s * tp * fp + t * fp + pf, x.bins);
    }
  }
  y.data.rowwise() += c.b.value.row(0);
  if (cache) *cache = {std::move(padded), x.batch, x.frames, x.bins};
  return y;
}

template <typename S>
FeatureMap<S> Backward(Conv2d<S>& c, const ConvCache<S>& cache, const FeatureMap<S>& dy,
                       bool need_dx) {
  FeatureMap<S> dx;
  dx.batch = cache.batch;
  dx.frames = cache.frames;
  dx.bins = cache.bins;
  c.b.grad += dy.data.colwise().sum();
  if (c.kt == 1 && c.kf == 1) {
    c.w.grad.noalias() += cache.padded.transpose() * dy.data;
    if (need_dx) dx.data.noalias() = dy.data * c.w.value.transpose();
    return dx;
  }
  const Index pt = (c.kt - 1) / 2, pf = (c.kf - 1) / 2;
  const Index tp = cache.frames + 2 * pt, fp = cache.bins + 2 * pf;
  const Index wide = cache.batch * tp * fp;
  MatrixX<S> dwide = MatrixX<S>::Zero(wide, c.cout);
  for (Index s = 0; s < cache.batch; ++s) {
    for (Index t = 0; t < cache.frames; ++t) {
      dwide.middleRows(s * tp * fp + t * fp + pf, cache.bins) =
          dy.data.middleRows((s * cache.frames + t) * cache.bins, cache.bins);
    }
  }
  MatrixX<S> dpadded;
  if (need_dx) dpadded = MatrixX<S>::Zero(cache.padded.rows(), c.cin);
  MatrixX<S> col, dcol;
  for (Index start = 0; start < wide; start += kConvChunkRows) {
    const Index rows = std::min(kConvChunkRows, wide - start);
    Im2Col(c, cache.padded, start, rows, fp, col);
    c.w.grad.noalias() += col.transpose() * dwide.middleRows(start, rows);
    if (!need_dx) continue;
    dcol.noalias() = dwide.middleRows(start, rows) * c.w.value.transpose();
    for (int a = 0; a < c.kt; ++a) {
      for (int b = 0; b < c.kf; ++b) {
        dpadded.middleRows(start + a * fp + b, rows) += dcol.middleCols((a * c.kf + b) * c.cin, c.cin);
      }
    }
  }
  if (need_dx) {
    dx.data.resize(cache.batch * cache.frames * cache.bins, c.cin);
    for (Index s = 0; s < cache.batch; ++s) {
      for (Index t = 0; t < cache.frames; ++t) {
        dx.data.middleRows((s * cache.frames + t) * cache.bins, cache.bins) =
            dpadded.middleRows(pf + s * tp * fp + (t + pt) * fp + pf, cache.bins);
      }
    }
  }
  return dx;
}

// -------------------------------------------------------------- batchnorm

template <typename S>
MatrixX<S> Forward(const BatchNorm<S>& bn, const MatrixX<S>& x, bool training,
                   BnCache<S>* cache) {
  const Index n = x.rows(), channels = x.cols();
  MatrixX<S> mean(1, channels), var(1, channels), inv_std(1, channels);
  MatrixX<S> xhat(n, channels), y(n, channels);
  for (Index c = 0; c < channels; ++c) {
    const auto col = x.col(c).array();
    if (training) {
      // Statistics accumulate in double so long float columns stay exact.
      const double mu = col.template cast<double>().mean();
      mean(0, c) = static_cast<S>(mu);
      var(0, c) = static_cast<S>((col.template cast<double>() - mu).square().mean());
    } else {
      mean(0, c) = bn.running_mean(0, c);
      var(0, c) = bn.running_var(0, c);
    }
    inv_std(0, c) = S(1) / std::sqrt(var(0, c) + static_cast<S>(bn.eps));
    xhat.col(c).array() = (col - mean(0, c)) * inv_std(0, c);
    y.col(c).array() = xhat.col(c).array() * bn.gamma.value(0, c) + bn.beta.value(0, c);
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->training = training;
    if (training) {
      cache->mean = std::move(mean);
      cache->var = std::move(var);
    }
  }
  return y;
}

template <typename S>
MatrixX<S> Backward(BatchNorm<S>& bn, const BnCache<S>& cache, const MatrixX<S>& dy) {
  const Index n = dy.rows();
  MatrixX<S> dx(n, dy.cols());
  for (Index c = 0; c < dy.cols(); ++c) {
    const auto d = dy.col(c).array();
    const auto xh = cache.xhat.col(c).array();
    const double sum_d = d.template cast<double>().sum();
    const double sum_dx = (d * xh).template cast<double>().sum();
    bn.gamma.grad(0, c) += static_cast<S>(sum_dx);
    bn.beta.grad(0, c) += static_cast<S>(sum_d);
    const S k = bn.gamma.value(0, c) * cache.inv_std(0, c);
    if (!cache.training) {
      dx.col(c).array() = d * k;
      continue;
    }
    const S mean_d = static_cast<S>(sum_d / n), mean_dx = static_cast<S>(sum_dx / n);
    dx.col(c).array() = k * (d - mean_d - xh * mean_dx);
  }
  return dx;
}

// ---------------------------------------------------------------- pooling

template <typename S>
FeatureMap<S> PoolForward(const FeatureMap<S>& x, int k, PoolCache<S>* cache) {
  FeatureMap<S> y;
  y.batch = x.batch;
  y.frames = x.frames;
  y.bins = x.bins / k;
  const Index lines = x.batch * x.frames;
  y.data.resize(lines * y.bins, x.channels());
  if (cache) {
    cache->argmax.assign(y.data.size(), 0);
    cache->in_bins = x.bins;
  }
  const S inv_k = S(1) / static_cast<S>(k);
  for (Index c = 0; c < x.channels(); ++c) {
    const S* in = x.data.col(c).data();
    S* out = y.data.col(c).data();
    for (Index l = 0; l < lines; ++l) {
      for (Index fo = 0; fo < y.bins; ++fo) {
        const S* v = in + l * x.bins + fo * k;
        int best = 0;
        S sum = v[0];
        for (int j = 1; j < k; ++j) {
          sum += v[j];
          if (v[j] > v[best]) best = j;
        }
        const Index o = l * y.bins + fo;
        out[o] = v[best] + sum * inv_k;
        if (cache) cache->argmax[c * y.data.rows() + o] = static_cast<unsigned char>(best);
      }
    }
  }
  return y;
}

template <typename S>
FeatureMap<S> PoolBackward(const PoolCache<S>& cache, const FeatureMap<S>& dy, int k) {
  FeatureMap<S> dx;
  dx.batch = dy.batch;
  dx.frames = dy.frames;
  dx.bins = cache.in_bins;
  const Index lines = dy.batch * dy.frames;
  dx.data = MatrixX<S>::Zero(lines * dx.bins, dy.channels());
  const S inv_k = S(1) / static_cast<S>(k);
  for (Index c = 0; c < dy.channels(); ++c) {
    const S* g = dy.data.col(c).data();
    S* out = dx.data.col(c).data();
    for (Index l = 0; l < lines; ++l) {
      for (Index fo = 0; fo < dy.bins; ++fo) {
        const Index o = l * dy.bins + fo;
        S* v = out + l * dx.bins + fo * k;
        for (int j = 0; j < k; ++j) v[j] += g[o] * inv_k;
        v[cache.argmax[c * dy.data.rows() + o]] += g[o];
      }
    }
  }
  return dx;
}

// -------------------------------------------------------------------- GRU

template <typename S>
MatrixX<S> Forward(const GruDirection<S>& g, const MatrixX<S>& x, Index batch, bool reverse,
                   GruCache<S>* cache) {
  const Index h = g.wh.value.rows();
  const Index steps = x.rows() / batch;
  MatrixX<S> gi = x * g.wi.value;
  gi.rowwise() += g.bi.value.row(0);
  MatrixX<S> out(x.rows(), h);
  MatrixX<S> r(x.rows(), h), z(x.rows(), h), n(x.rows(), h), gn(x.rows(), h), hp(x.rows(), h);
  MatrixX<S> state = MatrixX<S>::Zero(batch, h);
  MatrixX<S> gh(batch, 3 * h);
  for (Index k = 0; k < steps; ++k) {
    const Index t = reverse ? steps - 1 - k : k;
    const Index row = t * batch;
    gh.noalias() = state * g.wh.value;
    gh.rowwise() += g.bh.value.row(0);
    auto rt = r.middleRows(row, batch);
    auto zt = z.middleRows(row, batch);
    auto nt = n.middleRows(row, batch);
    rt = Sigmoid<S>(gi.block(row, 0, batch, h) + gh.leftCols(h));
    zt = Sigmoid<S>(gi.block(row, h, batch, h) + gh.middleCols(h, h));
    gn.middleRows(row, batch) = gh.rightCols(h);
    nt = (gi.block(row, 2 * h, batch, h).array() + rt.array() * gh.rightCols(h).array()).tanh();
    hp.middleRows(row, batch) = state;
    state = ((S(1) - zt.array()) * nt.array() + zt.array() * state.array()).matrix();
    out.middleRows(row, batch) = state;
  }
  if (cache) {
    cache->x = x;
    cache->r = std::move(r);
    cache->z = std::move(z);
    cache->n = std::move(n);
    cache->gn = std::move(gn);
    cache->hprev = std::move(hp);
  }
  return out;
}

template <typename S>
MatrixX<S> Backward(GruDirection<S>& g, const GruCache<S>& cache, const MatrixX<S>& dh_out,
                    Index batch, bool reverse) {
  const Index h = g.wh.value.rows();
  const Index steps = cache.x.rows() / batch;
  MatrixX<S> dgi(cache.x.rows(), 3 * h);
  MatrixX<S> dgh(batch, 3 * h);
  MatrixX<S> dnext = MatrixX<S>::Zero(batch, h);
  for (Index k = steps - 1; k >= 0; --k) {
    const Index t = reverse ? steps - 1 - k : k;
    const Index row = t * batch;
    const auto r = cache.r.middleRows(row, batch).array();
    const auto z = cache.z.middleRows(row, batch).array();
    const auto n = cache.n.middleRows(row, batch).array();
    const auto gn = cache.gn.middleRows(row, batch).array();
    const auto hp = cache.hprev.middleRows(row, batch);
    const MatrixX<S> dh = dh_out.middleRows(row, batch) + dnext;
    const auto d = dh.array();
    const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> dn_pre = d * (S(1) - z) * (S(1) - n * n);
    const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> dz_pre =
        d * (hp.array() - n) * z * (S(1) - z);
    const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> dr_pre = dn_pre * gn * r * (S(1) - r);
    dgi.block(row, 0, batch, h) = dr_pre.matrix();
    dgi.block(row, h, batch, h) = dz_pre.matrix();
    dgi.block(row, 2 * h, batch, h) = dn_pre.matrix();
    dgh.leftCols(h) = dr_pre.matrix();
    dgh.middleCols(h, h) = dz_pre.matrix();
    dgh.rightCols(h) = (dn_pre * r).matrix();
    g.wh.grad.noalias() += hp.transpose() * dgh;
    g.bh.grad += dgh.colwise().sum();
    dnext = (d * z).matrix();
    dnext.noalias() += dgh * g.wh.value.transpose();
  }
  g.wi.grad.noalias() += cache.x.transpose() * dgi;
  g.bi.grad += dgi.colwise().sum();
  return dgi * g.wi.value.transpose();
}

template <typename S>
MatrixX<S> Forward(const BiGru<S>& g, const MatrixX<S>& x, Index batch, BiGruCache<S>* cache) {
  const Index h = g.fwd.wh.value.rows();
  MatrixX<S> y(x.rows(), 2 * h);
  y.leftCols(h) = Forward(g.fwd, x, batch, false, cache ? &cache->fwd : nullptr);
  y.rightCols(h) = Forward(g.bwd, x, batch, true, cache ? &cache->bwd : nullptr);
  return y;
}

template <typename S>
MatrixX<S> Backward(BiGru<S>& g, const BiGruCache<S>& cache, const MatrixX<S>& dy, Index batch) {
  const Index h = g.fwd.wh.value.rows();
  MatrixX<S> dx = Backward(g.fwd, cache.fwd, MatrixX<S>(dy.leftCols(h)), batch, false);
  dx += Backward(g.bwd, cache.bwd, MatrixX<S>(dy.rightCols(h)), batch, true);
  return dx;
}

// ------------------------------------------------------------ whole model

namespace {

template <typename S>
FeatureMap<S> BlockForward(const ConvBlock<S>& b, const FeatureMap<S>& x, bool training, S alpha,
                           BlockCache<S>* cache) {
  FeatureMap<S> y = Forward(b.conv, x, cache ? &cache->conv : nullptr);
  y.data = Forward(b.bn, y.data, training, cache ? &cache->bn : nullptr);
  if (b.pool > 1) y = PoolForward(y, b.pool, cache ? &cache->pool : nullptr);
  y.data = EluForward(y.data, alpha);
  if (cache) cache->act = y.data;
  return y;
}

template <typename S>
FeatureMap<S> BlockBackward(ConvBlock<S>& b, const BlockCache<S>& cache, FeatureMap<S> dy,
                            S alpha, bool need_dx) {
  dy.data = EluBackward(cache.act, dy.data, alpha);
  if (b.pool > 1) dy = PoolBackward(cache.pool, dy, b.pool);
  dy.data = Backward(b.bn, cache.bn, dy.data);
  return Backward(b.conv, cache.conv, dy, need_dx);
}

// Rows (sample, frame) <-> (frame, sample).
template <typename S>
MatrixX<S> SwapMajor(const MatrixX<S>& x, Index outer, Index inner) {
  MatrixX<S> y(x.rows(), x.cols());
  for (Index o = 0; o < outer; ++o) {
    for (Index i = 0; i < inner; ++i) y.row(i * outer + o) = x.row(o * inner + i);
  }
  return y;
}

}  // namespace

template <typename S>
Prediction<S> Forward(const Model<S>& m, const FeatureMap<S>& x, bool training,
                      ForwardCache<S>* cache) {
  const ModelConfig& cfg = m.cfg;
  if (x.channels() != cfg.input_channels() || x.bins != cfg.bins || x.frames != cfg.frames) {
    throw InvalidInput("model expects " + std::to_string(cfg.frames) + " x " +
                       std::to_string(cfg.bins) + " x " + std::to_string(cfg.input_channels()) +
                       " features, got " + std::to_string(x.frames) + " x " +
                       std::to_string(x.bins) + " x " + std::to_string(x.channels()));
  }
  const S alpha = static_cast<S>(cfg.elu_alpha);
  Prediction<S> pred;
  if (cache) cache->input = x;

  FeatureMap<S> h = x;
  if (cfg.attention != AttentionMode::kNone) {
    FeatureMap<S> a = BlockForward(m.attention.block1, x, training, alpha,
                                   cache ? &cache->att1 : nullptr);
    a = BlockForward(m.attention.block2, a, training, alpha, cache ? &cache->att2 : nullptr);
    FeatureMap<S> map = Forward(m.attention.out, a, cache ? &cache->att_out : nullptr);
    map.data = Sigmoid<S>(map.data);
    if (cfg.attention == AttentionMode::kAllChannels) {
      h.data = x.data.cwiseProduct(map.data);
    } else {
      h.data.col(0) = x.data.col(0).cwiseProduct(map.data.col(0));
    }
    pred.attention_map = std::move(map);
  }
  for (int i = 0; i < 3; ++i) {
    h = BlockForward(m.blocks[i], h, training, alpha, cache ? &cache->blocks[i] : nullptr);
  }

  // Flatten (bin, channel) per frame: rows (sample, frame).
  const Index lines = x.batch * x.frames;
  const Index fo = h.bins, c = h.channels();
  MatrixX<S> z(lines, fo * c);
  for (Index f = 0; f < fo; ++f) {
    for (Index l = 0; l < lines; ++l) z.row(l).segment(f * c, c) = h.data.row(l * fo + f);
  }
  if (cache) {
    cache->pooled_bins = fo;
    cache->recurrent.resize(m.recurrent.size());
  }
  if (!m.recurrent.empty()) {
    z = SwapMajor(z, x.batch, x.frames);
    for (std::size_t i = 0; i < m.recurrent.size(); ++i) {
      z = Forward(m.recurrent[i], z, x.batch, cache ? &cache->recurrent[i] : nullptr);
    }
    z = SwapMajor(z, x.frames, x.batch);
  }

  MatrixX<S> u = z * m.frame_hidden.w.value;
  u.rowwise() += m.frame_hidden.b.value.row(0);
  VectorX<S> yt = u * m.frame_out.w.value.col(0);
  yt.array() += m.frame_out.b.value(0, 0);
  pred.framewise = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      yt.data(), x.batch, x.frames);
  pred.utterance = pred.framewise * m.utterance.w.value.col(0);
  pred.utterance.array() += m.utterance.b.value(0, 0);
  if (cache) {
    cache->temporal = std::move(z);
    cache->hidden = std::move(u);
  }
  return pred;
}

template <typename S>
void Backward(Model<S>& m, const ForwardCache<S>& cache, const Prediction<S>& pred,
              const MatrixX<S>& d_framewise, const VectorX<S>& d_utterance) {
  const ModelConfig& cfg = m.cfg;
  const S alpha = static_cast<S>(cfg.elu_alpha);
  const Index batch = cache.input.batch, frames = cache.input.frames;

  m.utterance.w.grad.col(0).noalias() += pred.framewise.transpose() * d_utterance;
  m.utterance.b.grad(0, 0) += d_utterance.sum();
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dyt = d_framewise;
  dyt.noalias() += d_utterance * m.utterance.w.value.col(0).transpose();
  const Eigen::Map<const VectorX<S>> dyt_vec(dyt.data(), batch * frames);

  m.frame_out.w.grad.col(0).noalias() += cache.hidden.transpose() * dyt_vec;
  m.frame_out.b.grad(0, 0) += dyt_vec.sum();
  const MatrixX<S> du = dyt_vec * m.frame_out.w.value.col(0).transpose();
  m.frame_hidden.w.grad.noalias() += cache.temporal.transpose() * du;
  m.frame_hidden.b.grad += du.colwise().sum();
  MatrixX<S> dz = du * m.frame_hidden.w.value.transpose();

  if (!m.recurrent.empty()) {
    dz = SwapMajor(dz, batch, frames);
    for (std::size_t i = m.recurrent.size(); i-- > 0;) {
      dz = Backward(m.recurrent[i], cache.recurrent[i], dz, batch);
    }
    dz = SwapMajor(dz, frames, batch);
  }

  const Index fo = cache.pooled_bins;
  const Index c = dz.cols() / fo;
  const Index lines = batch * frames;
  FeatureMap<S> dh;
  dh.batch = batch;
  dh.frames = frames;
  dh.bins = fo;
  dh.data.resize(lines * fo, c);
  for (Index f = 0; f < fo; ++f) {
    for (Index l = 0; l < lines; ++l) dh.data.row(l * fo + f) = dz.row(l).segment(f * c, c);
  }

  const bool attention = cfg.attention != AttentionMode::kNone;
  for (int i = 2; i >= 0; --i) {
    dh = BlockBackward(m.blocks[i], cache.blocks[i], std::move(dh), alpha, i > 0 || attention);
  }
  if (!attention) return;

  const FeatureMap<S>& map = *pred.attention_map;
  FeatureMap<S> dmap;
  dmap.batch = batch;
  dmap.frames = frames;
  dmap.bins = cache.input.bins;
  if (cfg.attention == AttentionMode::kAllChannels) {
    dmap.data = dh.data.cwiseProduct(cache.input.data);
  } else {
    dmap.data = dh.data.col(0).cwiseProduct(cache.input.data.col(0));
  }
  dmap.data.array() *= map.data.array() * (S(1) - map.data.array());
  FeatureMap<S> da = Backward(m.attention.out, cache.att_out, dmap, true);
  da = BlockBackward(m.attention.block2, cache.att2, std::move(da), alpha, true);
  BlockBackward(m.attention.block1, cache.att1, std::move(da), alpha, false);
}

template <typename S>
void ZeroGrad(Model<S>& m) {
  ForEachParameter(m, [](const std::string&, Param<S>& p) { p.grad.setZero(); });
}

template <typename S>
void UpdateRunningStats(Model<S>& m, const ForwardCache<S>& cache) {
  auto update = [](BatchNorm<S>& bn, const BnCache<S>& c, Index n) {
    if (!c.training) return;
    const S mom = static_cast<S>(bn.momentum);
    const S unbias = n > 1 ? static_cast<S>(n) / static_cast<S>(n - 1) : S(1);
    bn.running_mean = (S(1) - mom) * bn.running_mean + mom * c.mean;
    bn.running_var = (S(1) - mom) * bn.running_var + mom * unbias * c.var;
  };
  if (m.cfg.attention != AttentionMode::kNone) {
    update(m.attention.block1.bn, cache.att1.bn, cache.att1.bn.xhat.rows());
    update(m.attention.block2.bn, cache.att2.bn, cache.att2.bn.xhat.rows());
  }
  for (int i = 0; i < 3; ++i) {
    update(m.blocks[i].bn, cache.blocks[i].bn, cache.blocks[i].bn.xhat.rows());
  }
}

template <typename S>
Prediction<S> Predict(const Model<S>& m, const FeatureTensor<float>& x) {
  return Forward(m, StackFeatures<S>({&x}), false);
}

template <typename To, typename From>
Model<To> CastModel(const Model<From>& m) {
  Model<To> out = MakeModel<To>(m.cfg, 0);
  std::vector<const MatrixX<From>*> src;
  ForEachParameter(m, [&](const std::string&, const Param<From>& p) { src.push_back(&p.value); });
  ForEachBuffer(m, [&](const std::string&, const MatrixX<From>& b) { src.push_back(&b); });
  std::size_t i = 0;
  ForEachParameter(out, [&](const std::string&, Param<To>& p) {
    p.value = src[i++]->template cast<To>();
  });
  ForEachBuffer(out, [&](const std::string&, MatrixX<To>& b) { b = src[i++]->template cast<To>(); });
  return out;
}

// ------------------------------------------------------------- checkpoint

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'D', 'E', 'C', 'K', 'P', 'T', '1'};

template <typename S>
constexpr const char* DtypeName() {
  return std::is_same_v<S, float> ? "float32" : "float64";
}

template <typename S, typename T>
void ReadTensor(std::istream& is, MatrixX<S>& dst) {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> tmp(dst.rows(), dst.cols());
  is.read(reinterpret_cast<char*>(tmp.data()),
          static_cast<std::streamsize>(tmp.size() * sizeof(T)));
  dst = tmp.template cast<S>();
}

}  // namespace

template <typename S>
void SaveCheckpoint(const std::filesystem::path& path, const Model<S>& m,
                    const std::string& extraction_hash, const TrainingState& state) {
  json header = {{"format", "sdelab.checkpoint"},
                 {"version", 1},
                 {"dtype", DtypeName<S>()},
                 {"model_config", m.cfg.ToJson()},
                 {"extraction_hash", extraction_hash},
                 {"training_state",
                  {{"epoch", state.epoch},
                   {"learning_rate", state.learning_rate},
                   {"val_loss", std::isfinite(state.val_loss) ? json(state.val_loss) : json()},
                   {"optimizer", state.optimizer},
                   {"extra", state.extra}}}};
  json tensors = json::array();
  std::vector<const MatrixX<S>*> data;
  auto index = [&](const std::string& name, const MatrixX<S>& t) {
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    data.push_back(&t);
  };
  ForEachParameter(m, [&](const std::string& name, const Param<S>& p) { index(name, p.value); });
  ForEachBuffer(m, [&](const std::string& name, const MatrixX<S>& b) { index(name, b); });
  header["tensors"] = tensors;
  const std::string text = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw InvalidInput("cannot write checkpoint " + tmp.string());
    const std::uint64_t len = text.size();
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(text.data(), static_cast<std::streamsize>(len));
    for (const MatrixX<S>* t : data) {
      os.write(reinterpret_cast<const char*>(t->data()),
               static_cast<std::streamsize>(t->size() * sizeof(S)));
    }
    if (!os) throw InvalidInput("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename S>
Checkpoint<S> LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  std::uint64_t len = 0;
  is.read(magic, sizeof(magic));
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0 || len > (1u << 30)) {
    throw InvalidInput("not a checkpoint file: " + path.string());
  }
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  const json header = json::parse(text);

  Checkpoint<S> ck;
  ck.model = MakeModel<S>(ModelConfig::FromJson(header.at("model_config")), 0);
  ck.extraction_hash = header.at("extraction_hash");
  const json& st = header.at("training_state");
  ck.state.epoch = st.at("epoch");
  ck.state.learning_rate = st.at("learning_rate");
  ck.state.val_loss = st.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                  : st.at("val_loss").get<double>();
  ck.state.optimizer = st.at("optimizer");
  ck.state.extra = st.at("extra");

  const bool f32 = header.at("dtype") == "float32";
  const json& tensors = header.at("tensors");
  std::size_t i = 0;
  auto read = [&](const std::string& name, MatrixX<S>& t) {
    if (i >= tensors.size() || tensors[i].at("name") != name ||
        tensors[i].at("rows").get<Index>() != t.rows() ||
        tensors[i].at("cols").get<Index>() != t.cols()) {
      throw InvalidInput("checkpoint " + path.string() + " does not match its config at tensor '" +
                         name + "'");
    }
    ++i;
    if (f32) ReadTensor<S, float>(is, t);
    else ReadTensor<S, double>(is, t);
  };
  ForEachParameter(ck.model, [&](const std::string& name, Param<S>& p) { read(name, p.value); });
  ForEachBuffer(ck.model, [&](const std::string& name, MatrixX<S>& b) { read(name, b); });
  if (!is) throw InvalidInput("truncated checkpoint " + path.string());
  return ck;
}

// ---------------------------------------------------------- instantiation

#define SDE_INSTANTIATE(S)                                                                     \
  template FeatureMap<S> StackFeatures<S>(const std::vector<const FeatureTensor<float>*>&);   \
  template MatrixX<S> ChannelImage<S>(const FeatureMap<S>&, Index, Index);                     \
  template Model<S> MakeModel<S>(const ModelConfig&, std::uint64_t);                           \
  template FeatureMap<S> Forward<S>(const Conv2d<S>&, const FeatureMap<S>&, ConvCache<S>*);    \
  template FeatureMap<S> Backward<S>(Conv2d<S>&, const ConvCache<S>&, const FeatureMap<S>&,    \
                                     bool);                                                    \
  template MatrixX<S> Forward<S>(const BatchNorm<S>&, const MatrixX<S>&, bool, BnCache<S>*);   \
  template MatrixX<S> Backward<S>(BatchNorm<S>&, const BnCache<S>&, const MatrixX<S>&);        \
  template FeatureMap<S> PoolForward<S>(const FeatureMap<S>&, int, PoolCache<S>*);             \
  template FeatureMap<S> PoolBackward<S>(const PoolCache<S>&, const FeatureMap<S>&, int);      \
  template MatrixX<S> Forward<S>(const GruDirection<S>&, const MatrixX<S>&, Index, bool,       \
                                 GruCache<S>*);                                                \
  template MatrixX<S> Backward<S>(GruDirection<S>&, const GruCache<S>&, const MatrixX<S>&,     \
                                  Index, bool);                                                \
  template MatrixX<S> Forward<S>(const BiGru<S>&, const MatrixX<S>&, Index, BiGruCache<S>*);   \
  template MatrixX<S> Backward<S>(BiGru<S>&, const BiGruCache<S>&, const MatrixX<S>&, Index);  \
  template Prediction<S> Forward<S>(const Model<S>&, const FeatureMap<S>&, bool,               \
                                    ForwardCache<S>*);                                         \
  template void Backward<S>(Model<S>&, const ForwardCache<S>&, const Prediction<S>&,           \
                            const MatrixX<S>&, const VectorX<S>&);                             \
  template void ZeroGrad<S>(Model<S>&);                                                        \
  template void UpdateRunningStats<S>(Model<S>&, const ForwardCache<S>&);                      \
  template Prediction<S> Predict<S>(const Model<S>&, const FeatureTensor<float>&);             \
  template void SaveCheckpoint<S>(const std::filesystem::path&, const Model<S>&,               \
                                  const std::string&, const TrainingState&);                   \
  template Checkpoint<S> LoadCheckpoint<S>(const std::filesystem::path&);

SDE_INSTANTIATE(float)
SDE_INSTANTIATE(double)
#undef SDE_INSTANTIATE

template Model<float> CastModel<float, double>(const Model<double>&);
template Model<double> CastModel<double, float>(const Model<float>&);
template Model<float> CastModel<float, float>(const Model<float>&);
template Model<double> CastModel<double, double>(const Model<double>&);

}  // namespace sde
