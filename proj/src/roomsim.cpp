// src/roomsim.cpp

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

#include "sde/roomsim.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "sde/dsp.hpp"

namespace sde {

namespace {

std::string FormatVec(const Vec3& v) {
  std::ostringstream os;
  os << "(" << v.x() << ", " << v.y() << ", " << v.z() << ")";
  return os.str();
}

// Image coordinate along one axis for lattice index n, and the number of
// hits on the low (coordinate 0) and high (coordinate L) walls.
struct AxisImage {
  double coord;
  int hits_low;
  int hits_high;
};

AxisImage ImageAlongAxis(int n, double length, double src) {
  AxisImage a;
  if (n % 2 == 0) {
    a.coord = n * length + src;
  } else {
    a.coord = (n + 1) * length - src;
  }
  const int m = std::abs(n);
  if (n >= 0) {
    a.hits_high = (m + 1) / 2;
    a.hits_low = m / 2;
  } else {
    a.hits_low = (m + 1) / 2;
    a.hits_high = m / 2;
  }
  return a;
}

// Per-axis table: coordinate and band gain for every index in [-n_max, n_max].
struct AxisTable {
  int n_max = 0;
  std::vector<double> coord;
  std::vector<BandArray> gain;
  std::vector<int> hits;

  AxisTable(int n, double length, double src, const BandArray& beta_low,
            const BandArray& beta_high)
      : n_max(n), coord(2 * n + 1), gain(2 * n + 1), hits(2 * n + 1) {
    for (int i = -n; i <= n; ++i) {
      const AxisImage a = ImageAlongAxis(i, length, src);
      coord[i + n] = a.coord;
      gain[i + n] = beta_low.pow(a.hits_low) * beta_high.pow(a.hits_high);
      hits[i + n] = a.hits_low + a.hits_high;
    }
  }
};

BandArray Reflection(const Material& m) { return (1.0 - m.absorption).sqrt(); }

// Zero-phase octave filter-bank weights at `freq_hz`: triangles in log2
// frequency between adjacent centres, flat beyond the outer centres. The
// weights sum to one at every frequency.
BandArray BandWeights(double freq_hz) {
  BandArray w = BandArray::Zero();
  if (freq_hz <= kBandCentersHz.front()) {
    w[0] = 1.0;
    return w;
  }
  if (freq_hz >= kBandCentersHz.back()) {
    w[kNumBands - 1] = 1.0;
    return w;
  }
  for (int b = 0; b + 1 < kNumBands; ++b) {
    if (freq_hz < kBandCentersHz[b + 1]) {
      const double t = std::log2(freq_hz / kBandCentersHz[b]);
      w[b] = 1.0 - t;
      w[b + 1] = t;
      break;
    }
  }
  return w;
}

// Causal second-order Butterworth high-pass, in place.
void HighPass(Eigen::Ref<Eigen::VectorXd> x, double cutoff_hz, double fs) {
  const double w0 = 2.0 * kPi * cutoff_hz / fs;
  const double alpha = std::sin(w0) / std::sqrt(2.0);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  const double b0 = (1.0 + c) / 2.0 / a0, b1 = -(1.0 + c) / a0, b2 = b0;
  const double a1 = -2.0 * c / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (Index i = 0; i < x.size(); ++i) {
    const double y = b0 * x[i] + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = y;
    x[i] = y;
  }
}

}  // namespace

double RoomSpec::SurfaceArea() const {
  const auto a = SurfaceAreas();
  double s = 0.0;
  for (double v : a) s += v;
  return s;
}

std::array<double, 6> RoomSpec::SurfaceAreas() const {
  const double yz = dims.y() * dims.z();
  const double xz = dims.x() * dims.z();
  const double xy = dims.x() * dims.y();
  return {yz, yz, xz, xz, xy, xy};
}

BandArray RoomSpec::MeanAbsorption() const {
  const auto areas = SurfaceAreas();
  BandArray acc = BandArray::Zero();
  for (int s = 0; s < 6; ++s) acc += areas[s] * materials[s].absorption;
  return acc / SurfaceArea();
}

void RoomSpec::Validate() const {
  if (!(dims.array() > 0.0).all() || !dims.allFinite()) {
    throw InvalidInput("room dimensions must be positive, got " + FormatVec(dims));
  }
  for (const Material& m : materials) m.Validate();
}

RoomSpec RoomSpec::Uniform(const Vec3& dims, double alpha) {
  RoomSpec room;
  room.dims = dims;
  for (int s = 0; s < 6; ++s) {
    const SurfaceClass c = s == kFloor     ? SurfaceClass::kFloor
                           : s == kCeiling ? SurfaceClass::kCeiling
                                           : SurfaceClass::kWall;
    room.materials[s] = Material::Uniform(alpha, c);
  }
  return room;
}

SceneSpec SceneSpec::Make(const RoomSpec& room, const Vec3& source, const Vec3& mic,
                          std::uint64_t seed) {
  SceneSpec s;
  s.room = room;
  s.source_pos = source;
  s.mic_pos = mic;
  s.seed = seed;
  s.distance_m = (source - mic).norm();
  return s;
}

double SceneSpec::ElevationDeg() const {
  const Vec3 d = source_pos - mic_pos;
  const double horizontal = d.head<2>().norm();
  return std::atan2(d.z(), horizontal) * 180.0 / kPi;
}

void SceneSpec::Validate() const {
  room.Validate();
  for (const auto& [label, p] : {std::pair{"source", source_pos}, std::pair{"mic", mic_pos}}) {
    const bool inside = (p.array() >= kWallMargin).all() &&
                        (p.array() <= (room.dims.array() - kWallMargin)).all();
    if (!inside) {
      throw InvalidInput(std::string(label) + " position " + FormatVec(p) +
                         " is not at least 0.1 m inside room " + FormatVec(room.dims));
    }
  }
  const double d = (source_pos - mic_pos).norm();
  if (!(d > 0.0)) throw InvalidInput("source and mic coincide");
  if (std::abs(d - distance_m) > 1e-9) {
    throw InvalidInput("distance_m " + std::to_string(distance_m) +
                       " disagrees with geometry " + std::to_string(d));
  }
  const double el = ElevationDeg();
  if (std::abs(el) > kMaxElevationDeg + 1e-9) {
    throw InvalidInput("source elevation " + std::to_string(el) +
                       " deg outside +-35 deg");
  }
}

std::vector<ImageSource> EnumerateImages(const SceneSpec& scene, int max_order) {
  if (max_order < 0) throw InvalidInput("max_order must be >= 0");
  scene.Validate();
  const RoomSpec& room = scene.room;
  const auto& mats = room.materials;
  const AxisTable ax(max_order, room.dims.x(), scene.source_pos.x(),
                     Reflection(mats[kWallX0]), Reflection(mats[kWallX1]));
  const AxisTable ay(max_order, room.dims.y(), scene.source_pos.y(),
                     Reflection(mats[kWallY0]), Reflection(mats[kWallY1]));
  const AxisTable az(max_order, room.dims.z(), scene.source_pos.z(),
                     Reflection(mats[kFloor]), Reflection(mats[kCeiling]));

  std::vector<ImageSource> images;
  const int side = 2 * max_order + 1;
  images.reserve(static_cast<std::size_t>(side) * side * side);
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const BandArray gxy = ax.gain[i] * ay.gain[j];
      for (int k = 0; k < side; ++k) {
        ImageSource img;
        img.position = Vec3(ax.coord[i], ay.coord[j], az.coord[k]);
        img.lattice_index = Eigen::Vector3i(i - max_order, j - max_order, k - max_order);
        img.order = ax.hits[i] + ay.hits[j] + az.hits[k];
        img.gain = gxy * az.gain[k];
        images.push_back(img);
      }
    }
  }
  return images;
}

BandArray EyringRt60(const RoomSpec& room) {
  const BandArray alpha = room.MeanAbsorption();
  const double v = room.Volume();
  const double s = room.SurfaceArea();
  BandArray rt;
  for (int b = 0; b < kNumBands; ++b) {
    if (alpha[b] >= 1.0) {
      rt[b] = 0.0;
    } else if (alpha[b] <= 0.0) {
      rt[b] = kInf;
    } else {
      rt[b] = 0.161 * v / (-s * std::log(1.0 - alpha[b]));
    }
  }
  return rt;
}

double MidBandEyringRt60(const RoomSpec& room) {
  const BandArray alpha = room.MeanAbsorption();
  const double a = 0.5 * (alpha[2] + alpha[3]);
  if (a >= 1.0) return 0.0;
  if (a <= 0.0) return kInf;
  return 0.161 * room.Volume() / (-room.SurfaceArea() * std::log(1.0 - a));
}

Rir SynthesizeRir(const SceneSpec& scene, const RirOptions& options) {
  scene.Validate();
  const double fs = kSampleRate;
  const RoomSpec& room = scene.room;
  const double slowest = EyringRt60(room).maxCoeff();

  double length_s = options.length_s;
  if (length_s <= 0.0) {
    length_s = std::clamp(std::isfinite(slowest) ? 1.5 * slowest : options.max_length_s,
                          options.min_length_s, options.max_length_s);
  }
  // The direct path always fits.
  length_s = std::max(length_s, scene.distance_m / kSpeedOfSound + 0.01);
  const Index n_taps = static_cast<Index>(std::ceil(length_s * fs));
  const double radius = length_s * kSpeedOfSound;

  Rir rir;
  rir.length_s = static_cast<double>(n_taps) / fs;
  rir.direct_delay_samples = scene.distance_m / kSpeedOfSound * fs;

  // Lattice bounds: either the caller's cube or just enough to cover the
  // sphere of arrivals inside the RIR length.
  Eigen::Vector3i n_max;
  for (int a = 0; a < 3; ++a) {
    const int needed = static_cast<int>(std::ceil(radius / room.dims[a])) + 1;
    n_max[a] = options.max_order >= 0 ? options.max_order : needed;
  }
  rir.max_order = n_max.maxCoeff();
  // Guaranteed-complete arrival time for the chosen lattice.
  double complete_s = kInf;
  if (options.max_order >= 0) {
    complete_s = options.max_order * room.dims.minCoeff() / kSpeedOfSound;
  }
  rir.decay_truncated = std::min(complete_s, rir.length_s) < slowest;

  const auto& mats = room.materials;
  const Vec3& src = scene.source_pos;
  const Vec3& mic = scene.mic_pos;
  const AxisTable ax(n_max[0], room.dims.x(), src.x(), Reflection(mats[kWallX0]),
                     Reflection(mats[kWallX1]));
  const AxisTable ay(n_max[1], room.dims.y(), src.y(), Reflection(mats[kWallY0]),
                     Reflection(mats[kWallY1]));
  const AxisTable az(n_max[2], room.dims.z(), src.z(), Reflection(mats[kFloor]),
                     Reflection(mats[kCeiling]));

  const int half_taps = options.sinc_taps / 2;
  const Index pad = NextPow2(2048);
  const Index fft_len = NextPow2(n_taps + 2 * pad);
  const Index exact_limit = static_cast<Index>(options.fractional_delay_window_s * fs);
  Eigen::MatrixXd bands = Eigen::MatrixXd::Zero(fft_len, kNumBands);
  // The direct path is broadband and bypasses the filter bank.
  Eigen::VectorXd direct = Eigen::VectorXd::Zero(fft_len);
  Eigen::VectorXd kernel(options.sinc_taps);

  const double r2 = radius * radius;
  for (int i = 0; i <= 2 * n_max[0]; ++i) {
    const double dx = ax.coord[i] - mic.x();
    if (dx * dx > r2) continue;
    for (int j = 0; j <= 2 * n_max[1]; ++j) {
      const double dy = ay.coord[j] - mic.y();
      const double dxy2 = dx * dx + dy * dy;
      if (dxy2 > r2) continue;
      const BandArray gxy = ax.gain[i] * ay.gain[j];
      for (int k = 0; k <= 2 * n_max[2]; ++k) {
        const double dz = az.coord[k] - mic.z();
        const double d2 = dxy2 + dz * dz;
        if (d2 > r2) continue;
        const double dist = std::sqrt(d2);
        const double delay = dist / kSpeedOfSound * fs;
        const BandArray amp = gxy * az.gain[k] / dist;
        if (amp.maxCoeff() == 0.0) continue;
        const Index whole = static_cast<Index>(std::floor(delay));
        if (whole >= n_taps) continue;
        const bool is_direct = i == n_max[0] && j == n_max[1] && k == n_max[2];
        if (whole < exact_limit) {
          // 81-tap Hann-windowed sinc centred on the fractional delay.
          const Index first = whole - half_taps;
          for (int t = 0; t < options.sinc_taps; ++t) {
            const double u = static_cast<double>(first + t) - delay;
            const double arg = kPi * u;
            const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
            const double win = 0.5 + 0.5 * std::cos(kPi * u / (half_taps + 1));
            kernel[t] = sinc * win;
          }
          const Index row = pad + first;
          if (is_direct) {
            direct.segment(row, options.sinc_taps) += amp[0] * kernel;
            continue;
          }
          for (int b = 0; b < kNumBands; ++b) {
            bands.col(b).segment(row, options.sinc_taps) += amp[b] * kernel;
          }
        } else {
          const Index row = pad + static_cast<Index>(std::lround(delay));
          if (is_direct) {
            direct[row] += amp[0];
            continue;
          }
          for (int b = 0; b < kNumBands; ++b) bands(row, b) += amp[b];
        }
      }
    }
  }

  // Zero-phase filter bank: weight each band's impulse train in frequency
  // and sum.
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> acc(fft_len / 2 + 1, 0.0), spec;
  std::vector<double> buf(fft_len);
  std::vector<BandArray> weights(fft_len / 2 + 1);
  for (Index f = 0; f <= fft_len / 2; ++f) {
    weights[f] = BandWeights(static_cast<double>(f) * fs / fft_len);
  }
  bool reflected = false;
  for (int b = 0; b < kNumBands; ++b) {
    if (bands.col(b).isZero(0.0)) continue;
    reflected = true;
    Eigen::Map<Eigen::VectorXd>(buf.data(), fft_len) = bands.col(b);
    fft.fwd(spec, buf);
    for (Index f = 0; f <= fft_len / 2; ++f) acc[f] += weights[f][b] * spec[f];
  }
  rir.taps = direct.segment(pad, n_taps);
  if (reflected) {
    fft.inv(buf, acc, fft_len);
    // Surfaces stop reflecting well below the lowest band; without this the
    // all-positive image sum builds up a slow DC swell.
    Eigen::Map<Eigen::VectorXd> wet(buf.data(), fft_len);
    if (options.reflection_highpass_hz > 0.0) {
      HighPass(wet, options.reflection_highpass_hz, fs);
    }
    rir.taps += wet.segment(pad, n_taps);
  }

  const Rt60Estimate rt = EstimateRt60(rir.taps, kSampleRate);
  rir.rt60_s = rt.seconds;
  rir.rt60_flagged = rt.flagged;
  rir.drr_db = ComputeDrr(rir.taps, rir.direct_delay_samples, kSampleRate);
  if (!rir.taps.allFinite() || !(rir.Energy() > 0.0)) {
    throw Error("synthesized RIR is degenerate (non-finite or zero energy)");
  }
  return rir;
}

Rir SynthesizeRir(const SceneSpec& scene, int max_order, double length_s) {
  RirOptions options;
  options.max_order = max_order;
  options.length_s = length_s;
  return SynthesizeRir(scene, options);
}

Rt60Estimate EstimateRt60(const Eigen::Ref<const Eigen::VectorXd>& taps,
                          int sample_rate_hz) {
  Rt60Estimate est;
  const Index n = taps.size();
  if (n == 0) return est;
  // Schroeder integral, back to front.
  Eigen::VectorXd edc(n);
  double acc = 0.0;
  for (Index i = n - 1; i >= 0; --i) {
    acc += taps[i] * taps[i];
    edc[i] = acc;
  }
  const double total = edc[0];
  if (!(total > 0.0)) return est;

  // Usable samples: strictly positive remaining energy.
  Index last = n - 1;
  while (last > 0 && !(edc[last] > 0.0)) --last;
  auto level_db = [&](Index i) { return 10.0 * std::log10(edc[i] / total); };

  // Dynamic range actually present in the signal: loudest 10 ms block
  // against the final one. The Schroeder curve always plunges at the end of
  // a finite response, so it cannot tell a short decay from a long one.
  const Index block = std::max<Index>(1, sample_rate_hz / 100);
  double loudest = 0.0;
  for (Index b = 0; b < n; b += block) {
    loudest = std::max(loudest, taps.segment(b, std::min(block, n - b)).squaredNorm());
  }
  const Index tail_start = std::max<Index>(0, n - block);
  const double tail = taps.segment(tail_start, n - tail_start).squaredNorm();
  const double available_db = tail > 0.0 ? 10.0 * std::log10(loudest / tail) : kInf;

  constexpr double kStartDb = -5.0;
  double end_db = -25.0;
  if (available_db < 25.0) {
    est.flagged = true;
    end_db = -std::max(available_db - 5.0, 10.0);
  }
  Index start = -1;
  Index end = -1;
  for (Index i = 0; i <= last; ++i) {
    const double l = level_db(i);
    if (start < 0 && l <= kStartDb) start = i;
    if (l <= end_db) {
      end = i;
      break;
    }
  }
  if (start < 0) return est;  // no decaying tail (e.g. a single impulse)
  if (end < 0) {
    est.flagged = true;
    end = last;
  }
  if (end - start < 2) {
    est.flagged = true;
    return est;
  }
  // Least-squares line through (t, level) on [start, end].
  const Index m = end - start + 1;
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (Index i = start; i <= end; ++i) {
    const double t = static_cast<double>(i) / sample_rate_hz;
    const double l = level_db(i);
    st += t;
    sl += l;
    stt += t * t;
    stl += t * l;
  }
  const double denom = m * stt - st * st;
  const double slope = (m * stl - st * sl) / denom;
  est.fit_range_db = level_db(start) - level_db(end);
  if (!(slope < 0.0)) {
    est.flagged = true;
    return est;
  }
  est.seconds = -60.0 / slope;
  return est;
}

double ComputeDrr(const Eigen::Ref<const Eigen::VectorXd>& taps,
                  double direct_delay_samples, int sample_rate_hz) {
  const Index n = taps.size();
  const Index half = static_cast<Index>(std::lround(kDrrHalfWindowS * sample_rate_hz));
  const Index center = static_cast<Index>(std::lround(direct_delay_samples));
  const Index lo = std::clamp<Index>(center - half, 0, n);
  const Index hi = std::clamp<Index>(center + half + 1, 0, n);
  const double direct = taps.segment(lo, hi - lo).squaredNorm();
  const double reverb = taps.head(lo).squaredNorm() + taps.tail(n - hi).squaredNorm();
  if (!(reverb > 0.0)) return kInf;
  if (!(direct > 0.0)) return -kInf;
  return 10.0 * std::log10(direct / reverb);
}

SceneSpec SampleScene(std::uint64_t seed, double d_min, double d_max,
                      const MaterialTable& table, const SceneSamplingOptions& options) {
  if (table.empty()) throw InvalidInput("material table has an empty surface class");
  if (!(d_min > 0.0) || !(d_max >= d_min)) {
    throw InvalidInput("distance range must satisfy 0 < d_min <= d_max");
  }
  Rng rng(MixSeed(seed, 0x5ce4e));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](const std::vector<Material>& list) -> const Material& {
    return list[std::uniform_int_distribution<std::size_t>(0, list.size() - 1)(rng)];
  };
  const double max_el = kMaxElevationDeg * kPi / 180.0;

  // Distance is drawn once so its marginal stays uniform; rooms and
  // placements are resampled around it.
  const double distance = d_min == d_max ? d_min : d_min + (d_max - d_min) * unit(rng);
  for (int room_try = 0; room_try < options.room_retries; ++room_try) {
    RoomSpec room;
    for (int a = 0; a < 3; ++a) {
      room.dims[a] = options.dims_min[a] +
                     (options.dims_max[a] - options.dims_min[a]) * unit(rng);
    }
    const Material& floor = pick(table.floors);
    const Material& ceiling = pick(table.ceilings);
    const Material& wall = pick(table.walls);
    room.materials = {wall, wall, wall, wall, floor, ceiling};

    const Vec3 lo = Vec3::Constant(kWallMargin);
    const Vec3 hi = room.dims - Vec3::Constant(kWallMargin);
    if ((hi - lo).norm() < distance) continue;
    for (int attempt = 0; attempt < options.placement_retries; ++attempt) {
      const double azimuth = 2.0 * kPi * unit(rng);
      const double elevation = (2.0 * unit(rng) - 1.0) * max_el;
      const Vec3 offset = distance * Vec3(std::cos(elevation) * std::cos(azimuth),
                                          std::cos(elevation) * std::sin(azimuth),
                                          std::sin(elevation));
      // Microphones that keep both endpoints inside form a box; draw
      // uniformly from it, or reject the direction when it is empty.
      const Vec3 box_lo = lo.cwiseMax(lo - offset);
      const Vec3 box_hi = hi.cwiseMin(hi - offset);
      if ((box_lo.array() > box_hi.array()).any()) continue;
      Vec3 mic;
      for (int a = 0; a < 3; ++a) mic[a] = box_lo[a] + (box_hi[a] - box_lo[a]) * unit(rng);
      const Vec3 src = (mic + offset).cwiseMax(lo).cwiseMin(hi);
      SceneSpec scene = SceneSpec::Make(room, src, mic, seed);
      scene.Validate();
      return scene;
    }
  }
  throw InvalidInput("could not place a source at " + std::to_string(distance) +
                     " m in any sampled room after " +
                     std::to_string(options.room_retries) + " rooms");
}

}  // namespace sde
