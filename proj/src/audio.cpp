// src/audio.cpp

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

#include "sde/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <vector>

namespace sde {

std::string HexDigest(std::uint64_t h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kDigits[h & 0xf];
    h >>= 4;
  }
  return out;
}

namespace {

template <typename T>
T ReadLe(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void WriteLe(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

AudioClip ReadWav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InvalidInput("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t size = ReadLe<std::uint32_t>(chunk + 4);
    std::size_t body = pos + 8;
    if (body + size > bytes.size()) size = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      format = ReadLe<std::uint16_t>(chunk + 8);
      channels = ReadLe<std::uint16_t>(chunk + 10);
      rate = ReadLe<std::uint32_t>(chunk + 12);
      bits = ReadLe<std::uint16_t>(chunk + 22);
      if (format == 0xFFFE && size >= 26) {
        format = ReadLe<std::uint16_t>(chunk + 32);  // extensible subformat
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (data == nullptr || channels == 0 || rate == 0) {
    throw InvalidInput("WAV missing fmt/data chunk: " + path.string());
  }
  const std::size_t width = bits / 8;
  const bool is_float = format == 3;
  if (!(format == 1 || is_float) || (is_float && bits != 32) ||
      (!is_float && (bits != 16 && bits != 24 && bits != 32))) {
    throw InvalidInput("unsupported WAV encoding in " + path.string());
  }
  const std::size_t frame = width * channels;
  const std::size_t n = data_size / frame;

  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(rate);
  clip.source_id = path.stem().string();
  clip.samples.resize(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* s = data + i * frame;
    double v = 0.0;
    if (is_float) {
      v = ReadLe<float>(s);
    } else if (bits == 16) {
      v = ReadLe<std::int16_t>(s) / 32768.0;
    } else if (bits == 24) {
      std::int32_t w = (s[0] << 8) | (s[1] << 16) | (s[2] << 24);
      v = (w >> 8) / 8388608.0;
    } else {
      v = ReadLe<std::int32_t>(s) / 2147483648.0;
    }
    clip.samples[static_cast<Index>(i)] = v;
  }
  return clip;
}

void WriteWav(const std::filesystem::path& path, const AudioClip& clip) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot write WAV file: " + path.string());
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 4;
  os.write("RIFF", 4);
  WriteLe<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  WriteLe<std::uint32_t>(os, 16);
  WriteLe<std::uint16_t>(os, 3);  // IEEE float
  WriteLe<std::uint16_t>(os, 1);
  WriteLe<std::uint32_t>(os, static_cast<std::uint32_t>(clip.sample_rate_hz));
  WriteLe<std::uint32_t>(os, static_cast<std::uint32_t>(clip.sample_rate_hz) * 4);
  WriteLe<std::uint16_t>(os, 4);
  WriteLe<std::uint16_t>(os, 32);
  os.write("data", 4);
  WriteLe<std::uint32_t>(os, data_bytes);
  std::vector<float> buf(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    buf[i] = static_cast<float>(clip.samples[i]);
  }
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(data_bytes));
}

Eigen::VectorXd Resample(const Eigen::VectorXd& x, int from_hz, int to_hz) {
  if (from_hz <= 0 || to_hz <= 0) throw InvalidInput("non-positive sample rate");
  if (from_hz == to_hz) return x;
  const int g = std::gcd(from_hz, to_hz);
  const long up = to_hz / g;
  const long down = from_hz / g;
  const Index out_len = static_cast<Index>(
      (static_cast<long>(x.size()) * up + down - 1) / down);
  // Cutoff at the lower Nyquist, 16 zero crossings per side, Hann window.
  const double cutoff = std::min(1.0, static_cast<double>(up) / down);
  const int half = static_cast<int>(std::ceil(16.0 / cutoff));
  Eigen::VectorXd y(out_len);
  for (Index m = 0; m < out_len; ++m) {
    const double t = static_cast<double>(m) * down / up;  // input-sample time
    const long center = static_cast<long>(std::floor(t));
    double acc = 0.0;
    for (long k = center - half + 1; k <= center + half; ++k) {
      if (k < 0 || k >= x.size()) continue;
      const double u = t - static_cast<double>(k);
      const double arg = kPi * cutoff * u;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double w = 0.5 + 0.5 * std::cos(kPi * u / half);
      acc += x[k] * cutoff * sinc * w;
    }
    y[m] = acc;
  }
  return y;
}

AudioClip LoadClip(const std::filesystem::path& path) {
  AudioClip clip = ReadWav(path);
  if (clip.sample_rate_hz != kSampleRate) {
    clip.samples = Resample(clip.samples, clip.sample_rate_hz, kSampleRate);
    clip.sample_rate_hz = kSampleRate;
  }
  if (!clip.samples.allFinite()) {
    throw InvalidInput("non-finite samples in " + path.string());
  }
  return clip;
}

}  // namespace sde
