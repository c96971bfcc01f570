// sde/roomsim.hpp

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

// Shoebox room acoustics: lattice image-source enumeration with octave-band
// wall absorption, RIR rendering, and the RT60 / DRR descriptors.

#ifndef SDE_ROOMSIM_HPP_
#define SDE_ROOMSIM_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sde/core.hpp"

namespace sde {

inline constexpr int kNumBands = 6;
inline constexpr std::array<double, kNumBands> kBandCentersHz = {
    125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0};

using BandArray = Eigen::Array<double, kNumBands, 1>;

enum class SurfaceClass { kFloor, kCeiling, kWall };

std::string ToString(SurfaceClass s);
SurfaceClass SurfaceClassFromString(const std::string& s);

struct Material {
  std::string name;
  SurfaceClass surface = SurfaceClass::kWall;
  BandArray absorption = BandArray::Zero();

  // Throws InvalidInput unless every coefficient lies in [0, 1].
  void Validate() const;
  // Same absorption in every band; handy for tests and calibration rooms.
  static Material Uniform(double alpha, SurfaceClass surface = SurfaceClass::kWall);
};

// Curated absorption table, one list per surface class. The shipped table is
// versioned JSON (data/materials.json) compiled into the library.
struct MaterialTable {
  int version = 0;
  std::vector<Material> floors;
  std::vector<Material> ceilings;
  std::vector<Material> walls;

  static MaterialTable Builtin();
  static MaterialTable FromJson(const std::string& text);
  std::string ToJson() const;

  bool empty() const { return floors.empty() || ceilings.empty() || walls.empty(); }
  std::size_t combinations() const {
    return floors.size() * ceilings.size() * walls.size();
  }
};

// Surface order used everywhere: the x walls, the y walls, floor, ceiling.
enum Surface : int { kWallX0 = 0, kWallX1, kWallY0, kWallY1, kFloor, kCeiling };

struct RoomSpec {
  Vec3 dims = Vec3::Ones();
  std::array<Material, 6> materials;

  void Validate() const;
  double Volume() const { return dims.prod(); }
  double SurfaceArea() const;
  std::array<double, 6> SurfaceAreas() const;
  // Area-weighted mean absorption per band.
  BandArray MeanAbsorption() const;

  static RoomSpec Uniform(const Vec3& dims, double alpha);
};

inline constexpr double kWallMargin = 0.1;
inline constexpr double kMaxElevationDeg = 35.0;

struct SceneSpec {
  RoomSpec room;
  Vec3 source_pos = Vec3::Zero();
  Vec3 mic_pos = Vec3::Zero();
  std::uint64_t seed = 0;
  double distance_m = 0.0;

  // Builds a scene and fills the derived distance.
  static SceneSpec Make(const RoomSpec& room, const Vec3& source, const Vec3& mic,
                        std::uint64_t seed = 0);
  // Source elevation seen from the microphone, degrees.
  double ElevationDeg() const;
  // Rejects positions closer than kWallMargin to a surface, a stale
  // distance_m, or an elevation outside +-kMaxElevationDeg.
  void Validate() const;
};

struct ImageSource {
  Vec3 position;
  Eigen::Vector3i lattice_index;
  int order = 0;      // total number of wall hits
  BandArray gain;     // product of sqrt(1 - alpha) over the hits
};

// All images with |n|_inf <= max_order, i.e. (2 * max_order + 1)^3 of them.
std::vector<ImageSource> EnumerateImages(const SceneSpec& scene, int max_order);

struct RirOptions {
  // Negative: choose per-axis lattice bounds that cover the whole RIR length.
  int max_order = -1;
  // Zero: 1.5 x the slowest band's Eyring RT60, clamped to
  // [min_length_s, max_length_s].
  double length_s = 0.0;
  double min_length_s = 0.25;
  double max_length_s = 2.0;
  // Images arriving before this get 81-tap windowed-sinc fractional delays;
  // later (diffuse-tail) arrivals are rounded to the nearest sample.
  double fractional_delay_window_s = 0.1;
  int sinc_taps = 81;
  // Causal high-pass on reflected sound; zero disables it.
  double reflection_highpass_hz = 62.5;
};

struct Rir {
  int sample_rate_hz = kSampleRate;
  Eigen::VectorXd taps;
  double rt60_s = 0.0;
  double drr_db = 0.0;
  double direct_delay_samples = 0.0;
  // Modeled decay cut before -60 dB (length or image order too small).
  bool decay_truncated = false;
  // The RT60 fit had less than the full -5..-25 dB span available.
  bool rt60_flagged = false;
  int max_order = 0;
  double length_s = 0.0;

  double Energy() const { return taps.squaredNorm(); }
};

Rir SynthesizeRir(const SceneSpec& scene, const RirOptions& options = {});
Rir SynthesizeRir(const SceneSpec& scene, int max_order, double length_s);

struct Rt60Estimate {
  double seconds = 0.0;
  bool flagged = false;
  double fit_range_db = 0.0;  // decay span used by the line fit
};

// Schroeder backward integration, T20 fit on -5..-25 dB extrapolated to 60 dB.
Rt60Estimate EstimateRt60(const Eigen::Ref<const Eigen::VectorXd>& taps,
                          int sample_rate_hz = kSampleRate);
inline double EstimateRt60(const Rir& rir) {
  return EstimateRt60(rir.taps, rir.sample_rate_hz).seconds;
}

inline constexpr double kDrrHalfWindowS = 0.0025;

// Direct-to-reverberant ratio in dB; +inf when there is no reverberant energy.
double ComputeDrr(const Eigen::Ref<const Eigen::VectorXd>& taps,
                  double direct_delay_samples, int sample_rate_hz = kSampleRate);
inline double ComputeDrr(const Rir& rir) {
  return ComputeDrr(rir.taps, rir.direct_delay_samples, rir.sample_rate_hz);
}

// Eyring reverberation time per band.
BandArray EyringRt60(const RoomSpec& room);
// Eyring RT60 from the mean of the 500 Hz and 1 kHz absorption.
double MidBandEyringRt60(const RoomSpec& room);

struct SceneSamplingOptions {
  Vec3 dims_min{3.0, 3.0, 2.5};
  Vec3 dims_max{10.0, 10.0, 4.5};
  int placement_retries = 500;
  int room_retries = 20000;
};

// Deterministic in `seed`. One material per surface class; the four walls
// share the wall material so the table spans floors x ceilings x walls
// combinations.
SceneSpec SampleScene(std::uint64_t seed, double d_min, double d_max,
                      const MaterialTable& table,
                      const SceneSamplingOptions& options = {});

}  // namespace sde

#endif  // SDE_ROOMSIM_HPP_
