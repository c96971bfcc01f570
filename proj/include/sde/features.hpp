// sde/features.hpp

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

// STFT magnitude / sin-phase / cos-phase feature stacks and their on-disk
// cache.

#ifndef SDE_FEATURES_HPP_
#define SDE_FEATURES_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sde/audio.hpp"
#include "sde/core.hpp"

namespace sde {

inline constexpr int kStftWindow = 512;
inline constexpr int kStftHop = 256;
inline constexpr int kStftBins = kStftWindow / 2 + 1;

enum class FeatureChannel { kMagnitude, kSinPhase, kCosPhase };
enum class ChannelSubset { kAll, kMagnitudeOnly, kPhaseOnly };

std::string ToString(FeatureChannel c);
FeatureChannel FeatureChannelFromString(const std::string& s);
std::string ToString(ChannelSubset s);
ChannelSubset ChannelSubsetFromString(const std::string& s);
int NumChannels(ChannelSubset s);

struct StftConfig {
  int window = kStftWindow;  // periodic Hann
  int hop = kStftHop;
  int sample_rate_hz = kSampleRate;

  int bins() const { return window / 2 + 1; }
  // Full windows only, no edge padding.
  Index NumFrames(Index samples) const {
    return samples < window ? 0 : 1 + (samples - window) / hop;
  }
  std::string ToJson() const;
  // Stable digest of ToJson(); stored in caches and checkpoints.
  std::string Hash() const;
};

// Channels are T x F matrices (frames down, bins across).
template <typename Scalar>
struct FeatureTensor {
  std::vector<MatrixX<Scalar>> channels;
  std::vector<FeatureChannel> tags;
  double frame_hop_s = static_cast<double>(kStftHop) / kSampleRate;
  double window_s = static_cast<double>(kStftWindow) / kSampleRate;

  Index frames() const { return channels.empty() ? 0 : channels[0].rows(); }
  Index bins() const { return channels.empty() ? 0 : channels[0].cols(); }
  int num_channels() const { return static_cast<int>(channels.size()); }

  template <typename To>
  FeatureTensor<To> cast() const {
    FeatureTensor<To> out;
    for (const auto& c : channels) out.channels.push_back(c.template cast<To>());
    out.tags = tags;
    out.frame_hop_s = frame_hop_s;
    out.window_s = window_s;
    return out;
  }
};

// Complex one-sided STFT, T x F.
Eigen::MatrixXcd Stft(const Eigen::Ref<const Eigen::VectorXd>& x, const StftConfig& cfg = {});

// Magnitude, sin and cos of the phase. Zero-magnitude bins get phase 0.
// Throws InvalidInput for clips shorter than one window.
FeatureTensor<double> ExtractFeatures(const AudioClip& clip, const StftConfig& cfg = {});

template <typename Scalar>
FeatureTensor<Scalar> SelectChannels(const FeatureTensor<Scalar>& x, ChannelSubset subset) {
  FeatureTensor<Scalar> out;
  out.frame_hop_s = x.frame_hop_s;
  out.window_s = x.window_s;
  for (std::size_t i = 0; i < x.channels.size(); ++i) {
    const bool mag = x.tags[i] == FeatureChannel::kMagnitude;
    if (subset == ChannelSubset::kAll || (subset == ChannelSubset::kMagnitudeOnly) == mag) {
      out.channels.push_back(x.channels[i]);
      out.tags.push_back(x.tags[i]);
    }
  }
  return out;
}

// Cache file: "SDEFEAT1", u32 header length, JSON header (shape [T,F,C],
// channel tags, dtype, extraction hash), then float32 data channel by
// channel, each column-major T x F.
void WriteFeatureCache(const std::filesystem::path& path, const FeatureTensor<float>& x,
                       const std::string& extraction_hash);
// nullopt when the file is missing or was written under another hash.
std::optional<FeatureTensor<float>> ReadFeatureCache(const std::filesystem::path& path,
                                                     const std::string& extraction_hash);

// Loads `clip_path` and extracts; with a non-empty `cache_dir`, reuses or
// fills <cache_dir>/<key>.feat.
FeatureTensor<float> LoadFeatures(const std::filesystem::path& clip_path,
                                  const std::filesystem::path& cache_dir, const std::string& key,
                                  const StftConfig& cfg = {});

}  // namespace sde

#endif  // SDE_FEATURES_HPP_
