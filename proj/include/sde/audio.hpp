// sde/audio.hpp

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

#ifndef SDE_AUDIO_HPP_
#define SDE_AUDIO_HPP_

#include <filesystem>
#include <string>

#include "sde/core.hpp"

namespace sde {

// Mono clip. Everything inside the library runs at kSampleRate.
struct AudioClip {
  int sample_rate_hz = kSampleRate;
  Eigen::VectorXd samples;
  std::string source_id;

  Index size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Mean power over the whole signal.
inline double MeanPower(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return x.size() == 0 ? 0.0 : x.squaredNorm() / static_cast<double>(x.size());
}

// Reads PCM16/PCM24/PCM32/float32 WAV. Multi-channel input keeps channel 0.
// The result keeps the file's sample rate; see LoadClip for ingestion.
AudioClip ReadWav(const std::filesystem::path& path);

// Writes 32-bit IEEE float mono WAV.
void WriteWav(const std::filesystem::path& path, const AudioClip& clip);

// Band-limited (windowed-sinc) sample-rate conversion.
Eigen::VectorXd Resample(const Eigen::VectorXd& x, int from_hz, int to_hz);

// ReadWav followed by resampling to kSampleRate and a finiteness check.
AudioClip LoadClip(const std::filesystem::path& path);

}  // namespace sde

#endif  // SDE_AUDIO_HPP_
