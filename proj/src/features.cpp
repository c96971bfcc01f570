// src/features.cpp

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


#include "sde/features.hpp"

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <functional>
#include <thread>

namespace sde {

namespace {

constexpr char kCacheMagic[8] = {'S', 'D', 'E', 'F', 'E', 'A', 'T', '1'};

}  // namespace

std::string ToString(FeatureChannel c) {
  switch (c) {
    case FeatureChannel::kMagnitude: return "magnitude";
    case FeatureChannel::kSinPhase: return "sin_phase";
    case FeatureChannel::kCosPhase: return "cos_phase";
  }
  return "";
}

FeatureChannel FeatureChannelFromString(const std::string& s) {
  if (s == "magnitude") return FeatureChannel::kMagnitude;
  if (s == "sin_phase") return FeatureChannel::kSinPhase;
  if (s == "cos_phase") return FeatureChannel::kCosPhase;
  throw InvalidInput("unknown feature channel '" + s + "'");
}

std::string ToString(ChannelSubset s) {
  switch (s) {
    case ChannelSubset::kAll: return "all";
    case ChannelSubset::kMagnitudeOnly: return "magnitude_only";
    case ChannelSubset::kPhaseOnly: return "phase_only";
  }
  return "";
}

ChannelSubset ChannelSubsetFromString(const std::string& s) {
  if (s == "all") return ChannelSubset::kAll;
  if (s == "magnitude_only") return ChannelSubset::kMagnitudeOnly;
  if (s == "phase_only") return ChannelSubset::kPhaseOnly;
  throw InvalidInput("unknown channel subset '" + s +
                     "' (expected all, magnitude_only or phase_only)");
}

int NumChannels(ChannelSubset s) {
  return s == ChannelSubset::kAll ? 3 : s == ChannelSubset::kMagnitudeOnly ? 1 : 2;
}

std::string StftConfig::ToJson() const {
  return nlohmann::json{{"window", "hann_periodic"},
                        {"window_samples", window},
                        {"hop_samples", hop},
                        {"sample_rate_hz", sample_rate_hz},
                        {"padding", "none"},
                        {"zero_magnitude_phase", 0}}
      .dump();
}

std::string StftConfig::Hash() const { return HexDigest(Fnv1a(ToJson())); }

Eigen::MatrixXcd Stft(const Eigen::Ref<const Eigen::VectorXd>& x, const StftConfig& cfg) {
  const Index frames = cfg.NumFrames(x.size());
  const int n = cfg.window;
  Eigen::VectorXd window(n);
  for (int i = 0; i < n; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  Eigen::MatrixXcd out(frames, cfg.bins());
  std::vector<double> frame(n);
  std::vector<std::complex<double>> spec;
  for (Index t = 0; t < frames; ++t) {
    for (int i = 0; i < n; ++i) frame[i] = x[t * cfg.hop + i] * window[i];
    fft.fwd(spec, frame);
    for (int k = 0; k < cfg.bins(); ++k) out(t, k) = spec[k];
  }
  return out;
}

FeatureTensor<double> ExtractFeatures(const AudioClip& clip, const StftConfig& cfg) {
  if (clip.sample_rate_hz != cfg.sample_rate_hz) {
    throw InvalidInput("clip sample rate " + std::to_string(clip.sample_rate_hz) +
                       " Hz does not match the feature config (" +
                       std::to_string(cfg.sample_rate_hz) + " Hz)");
  }
  if (clip.size() < cfg.window) {
    throw InvalidInput("clip of " + std::to_string(clip.size()) +
                       " samples is shorter than one STFT window (" +
                       std::to_string(cfg.window) + ")");
  }
  const Eigen::MatrixXcd s = Stft(clip.samples, cfg);
  FeatureTensor<double> f;
  f.frame_hop_s = static_cast<double>(cfg.hop) / cfg.sample_rate_hz;
  f.window_s = static_cast<double>(cfg.window) / cfg.sample_rate_hz;
  f.tags = {FeatureChannel::kMagnitude, FeatureChannel::kSinPhase, FeatureChannel::kCosPhase};
  Eigen::MatrixXd mag = s.cwiseAbs();
  Eigen::MatrixXd sin_p(s.rows(), s.cols()), cos_p(s.rows(), s.cols());
  for (Index j = 0; j < s.cols(); ++j) {
    for (Index i = 0; i < s.rows(); ++i) {
      const double m = mag(i, j);
      sin_p(i, j) = m > 0.0 ? s(i, j).imag() / m : 0.0;
      cos_p(i, j) = m > 0.0 ? s(i, j).real() / m : 1.0;
    }
  }
  f.channels = {std::move(mag), std::move(sin_p), std::move(cos_p)};
  return f;
}

void WriteFeatureCache(const std::filesystem::path& path, const FeatureTensor<float>& x,
                       const std::string& extraction_hash) {
  nlohmann::json header = {{"shape", {x.frames(), x.bins(), x.num_channels()}},
                           {"dtype", "float32"},
                           {"layout", "channel, then column-major frames x bins"},
                           {"extraction_hash", extraction_hash},
                           {"frame_hop_s", x.frame_hop_s},
                           {"window_s", x.window_s}};
  header["channels"] = nlohmann::json::array();
  for (FeatureChannel c : x.tags) header["channels"].push_back(ToString(c));
  const std::string text = header.dump();

  // Unique per thread: concurrent runs may fill the same cache.
  const std::filesystem::path tmp =
      path.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw InvalidInput("cannot write feature cache " + tmp.string());
    const auto len = static_cast<std::uint32_t>(text.size());
    os.write(kCacheMagic, sizeof(kCacheMagic));
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& c : x.channels) {
      os.write(reinterpret_cast<const char*>(c.data()),
               static_cast<std::streamsize>(c.size() * sizeof(float)));
    }
    if (!os) throw InvalidInput("failed writing feature cache " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::optional<FeatureTensor<float>> ReadFeatureCache(const std::filesystem::path& path,
                                                     const std::string& extraction_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[sizeof(kCacheMagic)];
  std::uint32_t len = 0;
  is.read(magic, sizeof(magic));
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!is || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) {
    throw InvalidInput("not a feature cache file: " + path.string());
  }
  std::string text(len, '\0');
  is.read(text.data(), len);
  const nlohmann::json header = nlohmann::json::parse(text);
  if (header.value("extraction_hash", "") != extraction_hash) return std::nullopt;

  const auto shape = header.at("shape").get<std::vector<Index>>();
  FeatureTensor<float> x;
  x.frame_hop_s = header.at("frame_hop_s");
  x.window_s = header.at("window_s");
  for (const auto& tag : header.at("channels")) {
    x.tags.push_back(FeatureChannelFromString(tag.get<std::string>()));
    Eigen::MatrixXf c(shape.at(0), shape.at(1));
    is.read(reinterpret_cast<char*>(c.data()),
            static_cast<std::streamsize>(c.size() * sizeof(float)));
    x.channels.push_back(std::move(c));
  }
  if (!is) throw InvalidInput("truncated feature cache " + path.string());
  return x;
}

FeatureTensor<float> LoadFeatures(const std::filesystem::path& clip_path,
                                  const std::filesystem::path& cache_dir, const std::string& key,
                                  const StftConfig& cfg) {
  const std::string hash = cfg.Hash();
  std::filesystem::path cache;
  if (!cache_dir.empty()) {
    cache = cache_dir / (key + ".feat");
    if (auto hit = ReadFeatureCache(cache, hash)) return std::move(*hit);
  }
  FeatureTensor<float> x = ExtractFeatures(LoadClip(clip_path), cfg).cast<float>();
  if (!cache.empty()) {
    std::filesystem::create_directories(cache_dir);
    WriteFeatureCache(cache, x, hash);
  }
  return x;
}

}  // namespace sde
