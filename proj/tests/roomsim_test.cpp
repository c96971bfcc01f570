// tests/roomsim_test.cpp

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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace sde {
namespace {

SceneSpec ShoeboxScene(double alpha, const Vec3& src, const Vec3& mic,
                       const Vec3& dims = Vec3(7.5, 9.0, 3.5)) {
  return SceneSpec::Make(RoomSpec::Uniform(dims, alpha), src, mic);
}

// Unfolds an image by reflecting across the room's own two planes in turn.
// Returns (coordinate, hits on wall 0, hits on wall L).
std::tuple<double, int, int> MirrorOracle(int n, double length, double src) {
  double x = src;
  int low = 0, high = 0;
  bool at_high = (n > 0) == (std::abs(n) % 2 == 1);
  for (int i = 0; i < std::abs(n); ++i) {
    if (at_high) {
      x = 2.0 * length - x;
      ++high;
    } else {
      x = -x;
      ++low;
    }
    at_high = !at_high;
  }
  return {x, low, high};
}

TEST(EnumerateImagesTest, OrderZeroIsTheSource) {
  const SceneSpec s = ShoeboxScene(0.3, Vec3(2, 3, 1.5), Vec3(4, 4, 1.2));
  const auto images = EnumerateImages(s, 0);
  ASSERT_EQ(images.size(), 1u);
  EXPECT_TRUE(images[0].position.isApprox(s.source_pos));
  EXPECT_TRUE((images[0].gain == 1.0).all());
  EXPECT_EQ(images[0].order, 0);
}

TEST(EnumerateImagesTest, LatticeCountLaw) {
  const SceneSpec s = ShoeboxScene(0.3, Vec3(2, 3, 1.5), Vec3(4, 4, 1.2));
  for (int n = 0; n <= 4; ++n) {
    // Brute-force lattice count.
    std::size_t expected = 0;
    for (int i = -n; i <= n; ++i)
      for (int j = -n; j <= n; ++j)
        for (int k = -n; k <= n; ++k) ++expected;
    EXPECT_EQ(EnumerateImages(s, n).size(), expected);
    EXPECT_EQ(expected, static_cast<std::size_t>((2 * n + 1) * (2 * n + 1) * (2 * n + 1)));
  }
  EXPECT_EQ(EnumerateImages(s, 1).size(), 27u);
}

TEST(EnumerateImagesTest, MatchesMirrorUnfoldingWithPerWallGains) {
  RoomSpec room = RoomSpec::Uniform(Vec3(5.0, 4.0, 3.0), 0.0);
  const double alphas[6] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  for (int w = 0; w < 6; ++w) room.materials[w].absorption = BandArray::Constant(alphas[w]);
  room.materials[kCeiling].absorption[5] = 0.9;
  const SceneSpec s = SceneSpec::Make(room, Vec3(1.2, 1.7, 1.1), Vec3(3.1, 2.2, 1.4));
  const double lengths[3] = {5.0, 4.0, 3.0};
  for (const ImageSource& img : EnumerateImages(s, 3)) {
    BandArray gain = BandArray::Ones();
    int order = 0;
    for (int a = 0; a < 3; ++a) {
      const auto [coord, low, high] =
          MirrorOracle(img.lattice_index[a], lengths[a], s.source_pos[a]);
      EXPECT_NEAR(img.position[a], coord, 1e-12);
      gain *= (1.0 - room.materials[2 * a].absorption).sqrt().pow(low) *
              (1.0 - room.materials[2 * a + 1].absorption).sqrt().pow(high);
      order += low + high;
    }
    EXPECT_EQ(img.order, order);
    EXPECT_TRUE(img.gain.isApprox(gain, 1e-12));
  }
}

TEST(EnumerateImagesTest, FullyAbsorptiveRoomKillsReflections) {
  const SceneSpec s = ShoeboxScene(1.0, Vec3(2, 3, 1.5), Vec3(4, 4, 1.2));
  for (const ImageSource& img : EnumerateImages(s, 3)) {
    if (img.order == 0) {
      EXPECT_TRUE((img.gain == 1.0).all());
    } else {
      EXPECT_TRUE((img.gain == 0.0).all());
    }
  }
}

TEST(EnumerateImagesTest, RejectsInvalidScene) {
  const SceneSpec outside = ShoeboxScene(0.3, Vec3(2, 3, 3.45), Vec3(4, 4, 1.2));
  EXPECT_THROW(EnumerateImages(outside, 1), InvalidInput);
  SceneSpec stale = ShoeboxScene(0.3, Vec3(2, 3, 1.5), Vec3(4, 4, 1.2));
  stale.distance_m += 1e-6;
  EXPECT_THROW(EnumerateImages(stale, 1), InvalidInput);
  const SceneSpec steep = ShoeboxScene(0.3, Vec3(4, 4, 3.0), Vec3(4.2, 4, 0.5));
  EXPECT_THROW(steep.Validate(), InvalidInput);
  EXPECT_THROW(EnumerateImages(ShoeboxScene(0.3, Vec3(2, 3, 1.5), Vec3(4, 4, 1.2)), -1),
               InvalidInput);
}

TEST(SynthesizeRirTest, AnechoicSpikeAtDirectDelay) {
  // 3.43 m at 343 m/s and 16 kHz is exactly 160 samples.
  const SceneSpec s = ShoeboxScene(1.0, Vec3(1.0, 2.0, 1.5), Vec3(4.43, 2.0, 1.5));
  ASSERT_NEAR(s.distance_m, 3.43, 1e-12);
  const Rir rir = SynthesizeRir(s, 3, 0.05);
  Index peak;
  rir.taps.cwiseAbs().maxCoeff(&peak);
  EXPECT_EQ(peak, 160);
  EXPECT_NEAR(rir.direct_delay_samples, 160.0, 1e-9);
  EXPECT_NEAR(rir.taps[160], 1.0 / 3.43, 1e-12);
  EXPECT_EQ(rir.taps.squaredNorm(), rir.taps[160] * rir.taps[160]);
  EXPECT_TRUE(std::isinf(rir.drr_db));
  EXPECT_EQ(rir.rt60_s, 0.0);
}

TEST(SynthesizeRirTest, DirectAmplitudeFollowsInverseDistance) {
  const SceneSpec near = ShoeboxScene(1.0, Vec3(2.0, 3.0, 1.5), Vec3(3.715, 3.0, 1.5));
  const SceneSpec far = ShoeboxScene(1.0, Vec3(2.0, 3.0, 1.5), Vec3(5.43, 3.0, 1.5));
  ASSERT_NEAR(far.distance_m / near.distance_m, 2.0, 1e-12);
  const Rir a = SynthesizeRir(near, 2, 0.05);
  const Rir b = SynthesizeRir(far, 2, 0.05);
  const double ratio = a.taps.cwiseAbs().maxCoeff() / b.taps.cwiseAbs().maxCoeff();
  EXPECT_NEAR(ratio, 2.0, 0.02);
}

// Incoherent image-energy decay: each image deposits g^2 / d^2 at its
// arrival sample. Its Schroeder slope is what the rendered RIR should show.
double IncoherentRt60(const SceneSpec& s, double alpha, double length_s) {
  const Index n = static_cast<Index>(length_s * kSampleRate);
  const int order = static_cast<int>(length_s * kSpeedOfSound / s.room.dims.minCoeff()) + 1;
  Eigen::VectorXd energy = Eigen::VectorXd::Zero(n);
  for (const ImageSource& img : EnumerateImages(s, order)) {
    const double d = (img.position - s.mic_pos).norm();
    const Index k = std::lround(d / kSpeedOfSound * kSampleRate);
    if (k < n) energy[k] += std::pow(1.0 - alpha, img.order) / (d * d);
  }
  return EstimateRt60(Eigen::VectorXd(energy.cwiseSqrt())).seconds;
}

TEST(SynthesizeRirTest, Rt60FollowsImageEnergyDecay) {
  for (const Vec3& dims : {Vec3(7.5, 9.0, 3.5), Vec3(5.0, 5.0, 5.0)}) {
    const SceneSpec s = ShoeboxScene(0.3, Vec3(2.1, 3.3, 1.6), Vec3(4.2, 4.1, 1.3), dims);
    const Rir rir = SynthesizeRir(s);
    EXPECT_FALSE(rir.decay_truncated);
    EXPECT_TRUE(rir.taps.allFinite());
    const double oracle = IncoherentRt60(s, 0.3, rir.length_s);
    EXPECT_NEAR(rir.rt60_s / oracle, 1.0, 0.15) << "measured " << rir.rt60_s;
  }
}

TEST(SynthesizeRirTest, Rt60AgreesWithEyringInACube) {
  // Sabine/Eyring assume a diffuse field, which a cube approaches closely.
  const SceneSpec s = ShoeboxScene(0.3, Vec3(2.1, 3.3, 1.6), Vec3(4.2, 4.1, 1.3),
                                   Vec3(5.0, 5.0, 5.0));
  const double v = 125.0;
  const double area = 150.0;
  const double eyring = 0.161 * v / (-area * std::log(1.0 - 0.3));
  EXPECT_NEAR(EyringRt60(s.room)[0], eyring, 1e-12);
  EXPECT_NEAR(MidBandEyringRt60(s.room), eyring, 1e-12);
  const Rir rir = SynthesizeRir(s);
  EXPECT_NEAR(rir.rt60_s / eyring, 1.0, 0.25) << "measured " << rir.rt60_s;
}

TEST(SynthesizeRirTest, FlagsTruncatedDecay) {
  const SceneSpec s = ShoeboxScene(0.05, Vec3(2.1, 3.3, 1.6), Vec3(5.2, 6.1, 1.3));
  EXPECT_TRUE(SynthesizeRir(s, 2, 0.3).decay_truncated);
}

TEST(SynthesizeRirTest, DirectDelayMatchesGeometry) {
  const MaterialTable table = MaterialTable::Builtin();
  RirOptions opts;
  opts.max_length_s = 0.1;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SceneSpec s = SampleScene(seed, 1.0, 8.0, table);
    const Rir rir = SynthesizeRir(s, opts);
    const double expected = s.distance_m * kSampleRate / kSpeedOfSound;
    EXPECT_LE(std::abs(rir.direct_delay_samples - expected), 1.0);
    // Nothing arrives before the direct path; the zero-phase band filters
    // only smear a trace of the early reflections ahead of it.
    const Index quiet = static_cast<Index>(expected) - 41;
    const double direct = 1.0 / (s.distance_m * s.distance_m);
    if (quiet > 0) {
      EXPECT_LT(rir.taps.head(quiet).squaredNorm(), 1e-3 * direct) << "seed " << seed;
    }
    // With the walls removed the strongest tap sits on the direct path.
    SceneSpec anechoic = s;
    for (Material& m : anechoic.room.materials) m = Material::Uniform(1.0, m.surface);
    const Rir bare = SynthesizeRir(anechoic, opts);
    Index peak;
    bare.taps.cwiseAbs().maxCoeff(&peak);
    EXPECT_LE(std::abs(static_cast<double>(peak) - expected), 0.5) << "seed " << seed;
  }
}

TEST(SynthesizeRirTest, ReciprocityOfEnergyEnvelope) {
  const Vec3 a(1.3, 2.2, 1.1), b(4.6, 6.9, 2.0);
  RoomSpec room = RoomSpec::Uniform(Vec3(6.0, 8.0, 3.0), 0.2);
  room.materials[kFloor].absorption << 0.05, 0.1, 0.2, 0.4, 0.5, 0.6;
  const Rir ab = SynthesizeRir(SceneSpec::Make(room, a, b), -1, 0.4);
  const Rir ba = SynthesizeRir(SceneSpec::Make(room, b, a), -1, 0.4);
  ASSERT_EQ(ab.taps.size(), ba.taps.size());
  const Index block = kSampleRate / 100;
  for (Index start = 0; start + block <= ab.taps.size(); start += block) {
    const double ea = ab.taps.segment(start, block).squaredNorm();
    const double eb = ba.taps.segment(start, block).squaredNorm();
    if (ea < 1e-12) continue;
    EXPECT_NEAR(eb / ea, 1.0, 0.01) << "block at " << start;
  }
}

TEST(SynthesizeRirTest, MoreAbsorptionNeverAddsEnergy) {
  const Vec3 src(1.3, 2.2, 1.1), mic(4.6, 6.9, 2.0);
  for (int surface = 0; surface < 6; ++surface) {
    RoomSpec room = RoomSpec::Uniform(Vec3(6.0, 8.0, 3.0), 0.2);
    const Rir base = SynthesizeRir(SceneSpec::Make(room, src, mic), -1, 0.3);
    room.materials[surface].absorption += 0.3;
    const Rir damped = SynthesizeRir(SceneSpec::Make(room, src, mic), -1, 0.3);
    EXPECT_LT(damped.Energy(), base.Energy()) << "surface " << surface;
  }
}

TEST(EstimateRt60Test, ExponentialDecayOracle) {
  // Amplitude envelope exp(-6.91 t / 1.0): energy falls 60 dB in 1.0 s.
  Rng rng(3);
  std::normal_distribution<double> noise;
  const Index n = 2 * kSampleRate;
  Eigen::VectorXd h(n);
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    h[i] = std::exp(-6.91 * t / 1.0) * noise(rng);
  }
  const Rt60Estimate est = EstimateRt60(h);
  EXPECT_NEAR(est.seconds, 1.0, 0.05);
  EXPECT_FALSE(est.flagged);
  // Level differences are scale invariant.
  EXPECT_NEAR(EstimateRt60(Eigen::VectorXd(37.5 * h)).seconds, est.seconds, 1e-9);
  EXPECT_NEAR(EstimateRt60(Eigen::VectorXd(1e-3 * h)).seconds, est.seconds, 1e-9);
}

TEST(EstimateRt60Test, KnownDecayConstants) {
  for (double rt : {0.3, 0.6, 1.5}) {
    Rng rng(11);
    std::normal_distribution<double> noise;
    const Index n = static_cast<Index>(2.0 * rt * kSampleRate);
    Eigen::VectorXd h(n);
    for (Index i = 0; i < n; ++i) {
      h[i] = std::exp(-6.9078 * i / (rt * kSampleRate)) * noise(rng);
    }
    EXPECT_NEAR(EstimateRt60(h).seconds / rt, 1.0, 0.05) << "rt " << rt;
  }
}

TEST(EstimateRt60Test, SingleImpulseHasNoTail) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(1000);
  h[100] = 0.7;
  EXPECT_EQ(EstimateRt60(h).seconds, 0.0);
}

TEST(EstimateRt60Test, ShortDecayIsFlagged) {
  // Only about 9 dB of decay is present in the buffer.
  Eigen::VectorXd h(4000);
  for (Index i = 0; i < h.size(); ++i) h[i] = std::exp(-i / 4000.0) * ((i % 7) - 3.0);
  const Rt60Estimate est = EstimateRt60(h);
  EXPECT_TRUE(est.flagged);
  EXPECT_GT(est.seconds, 0.0);
}

TEST(ComputeDrrTest, SentinelAndRatios) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(2000);
  h[200] = 1.0;
  EXPECT_TRUE(std::isinf(ComputeDrr(h, 200.0)));
  EXPECT_GT(ComputeDrr(h, 200.0), 0.0);

  // Direct window is +-40 samples at 16 kHz.
  h[1000] = 1.0;
  EXPECT_NEAR(ComputeDrr(h, 200.0), 0.0, 1e-12);
  h[1000] = 0.5;
  EXPECT_NEAR(ComputeDrr(h, 200.0), 10.0 * std::log10(4.0), 1e-12);
  EXPECT_NEAR(ComputeDrr(h, 200.0), 6.0206, 1e-4);
  // Samples just inside the window count as direct.
  h[240] = 1.0;
  EXPECT_NEAR(ComputeDrr(h, 200.0), 10.0 * std::log10(8.0), 1e-12);
}

TEST(SampleSceneTest, DeterministicAndInvariantPreserving) {
  const MaterialTable table = MaterialTable::Builtin();
  const SceneSpec a = SampleScene(42, 1.0, 14.0, table);
  const SceneSpec b = SampleScene(42, 1.0, 14.0, table);
  EXPECT_EQ(a.source_pos, b.source_pos);
  EXPECT_EQ(a.mic_pos, b.mic_pos);
  EXPECT_EQ(a.room.dims, b.room.dims);
  for (int s = 0; s < 6; ++s) EXPECT_EQ(a.room.materials[s].name, b.room.materials[s].name);
  EXPECT_NE(SampleScene(43, 1.0, 14.0, table).source_pos, a.source_pos);

  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const SceneSpec s = SampleScene(seed, 1.0, 14.0, table);
    EXPECT_GE(s.distance_m, 1.0);
    EXPECT_LT(s.distance_m, 14.0);
    EXPECT_NEAR(s.distance_m, (s.source_pos - s.mic_pos).norm(), 1e-9);
    EXPECT_LE(std::abs(s.ElevationDeg()), 35.0 + 1e-9);
    EXPECT_NO_THROW(s.Validate());
  }
}

TEST(SampleSceneTest, RejectsImpossibleDistances) {
  const MaterialTable table = MaterialTable::Builtin();
  SceneSamplingOptions small;
  small.dims_min = Vec3(3, 3, 2.5);
  small.dims_max = Vec3(3, 3, 2.5);
  small.room_retries = 3;
  EXPECT_THROW(SampleScene(1, 20.0, 20.0, table, small), InvalidInput);
  EXPECT_THROW(SampleScene(1, 2.0, 1.0, table), InvalidInput);
  EXPECT_THROW(SampleScene(1, 1.0, 2.0, MaterialTable{}), InvalidInput);
}

TEST(MaterialTableTest, ShippedTableSpans2912Combinations) {
  const MaterialTable t = MaterialTable::Builtin();
  EXPECT_EQ(t.floors.size(), 14u);
  EXPECT_EQ(t.walls.size(), 13u);
  EXPECT_EQ(t.ceilings.size(), 16u);
  EXPECT_EQ(t.combinations(), 2912u);
  EXPECT_GE(t.version, 1);

  std::ifstream is(std::string(SDE_SOURCE_DIR) + "/data/materials.json");
  std::stringstream ss;
  ss << is.rdbuf();
  const MaterialTable from_file = MaterialTable::FromJson(ss.str());
  EXPECT_EQ(from_file.combinations(), t.combinations());
  const MaterialTable again = MaterialTable::FromJson(t.ToJson());
  ASSERT_EQ(again.walls.size(), t.walls.size());
  for (std::size_t i = 0; i < t.walls.size(); ++i) {
    EXPECT_EQ(again.walls[i].name, t.walls[i].name);
    EXPECT_TRUE((again.walls[i].absorption == t.walls[i].absorption).all());
  }
}

TEST(MaterialTableTest, RejectsBadCoefficients) {
  EXPECT_THROW(MaterialTable::FromJson(
                   R"({"materials":[{"name":"x","surface":"wall","absorption":[0,0,0,0,0,1.2]}]})"),
               InvalidInput);
  EXPECT_THROW(MaterialTable::FromJson(
                   R"({"materials":[{"name":"x","surface":"wall","absorption":[0,0]}]})"),
               InvalidInput);
  EXPECT_THROW(MaterialTable::FromJson(
                   R"({"materials":[{"name":"x","surface":"roof","absorption":[0,0,0,0,0,0]}]})"),
               InvalidInput);
}

}  // namespace
}  // namespace sde
