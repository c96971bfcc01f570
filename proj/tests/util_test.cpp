// tests/util_test.cpp

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

#include <gtest/gtest.h>

#include <cmath>

#include "sde/audio.hpp"
#include "sde/csv.hpp"
#include "sde/parallel.hpp"
#include "sde/stats.hpp"
#include "test_util.hpp"

namespace sde {
namespace {

TEST(StatsTest, StudentTQuantilesMatchTables) {
  // Two-sided 95% critical values from standard tables.
  EXPECT_NEAR(StudentTQuantile(0.975, 1), 12.706, 1e-3);
  EXPECT_NEAR(StudentTQuantile(0.975, 4), 2.776, 1e-3);
  EXPECT_NEAR(StudentTQuantile(0.975, 9), 2.262, 1e-3);
  EXPECT_NEAR(StudentTQuantile(0.975, 29), 2.045, 1e-3);
  EXPECT_NEAR(StudentTQuantile(0.5, 7), 0.0, 1e-9);
  EXPECT_NEAR(StudentTQuantile(0.025, 4), -2.776, 1e-3);
  EXPECT_NEAR(NormalQuantile(0.975), 1.959964, 1e-6);
}

TEST(StatsTest, PercentileMeanStd) {
  EXPECT_DOUBLE_EQ(Percentile({4, 1, 3, 2}, 50), 2.5);
  EXPECT_DOUBLE_EQ(Percentile({4, 1, 3, 2}, 0), 1.0);
  EXPECT_DOUBLE_EQ(Percentile({4, 1, 3, 2}, 100), 4.0);
  EXPECT_DOUBLE_EQ(Mean({1, 2, 3}), 2.0);
  EXPECT_DOUBLE_EQ(StdDev({1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(StdDev({5}), 0.0);
}

TEST(BinSpecTest, ParseFindLabel) {
  const BinSpec b = BinSpec::Parse("[1,2),[2,4),[4,8),[8,14)");
  EXPECT_EQ(b.size(), 4);
  EXPECT_EQ(b.Find(1.0), 0);
  EXPECT_EQ(b.Find(2.0), 1);
  EXPECT_EQ(b.Find(13.99), 3);
  EXPECT_EQ(b.Find(14.0), -1);
  EXPECT_EQ(b.Find(0.5), -1);
  EXPECT_EQ(b.Label(2), "[4,8)");
  EXPECT_THROW(BinSpec::Parse("[2,1)"), InvalidInput);
  EXPECT_THROW(BinSpec::Parse("[1,3),[2,4)"), InvalidInput);
}

TEST(CsvTest, QuotedFieldsRoundTrip) {
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{"x,y", "say \"hi\""}, {"line\nbreak", ""}};
  const CsvTable back = ParseCsv(FormatCsv(t));
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.Column("b"), 1);
  EXPECT_THROW(back.RequireColumn("c", "test"), InvalidInput);
}

TEST(CsvTest, DoublesRoundTripExactly) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, kInf, -kInf}) {
    EXPECT_EQ(ParseDouble(FormatDouble(v), "t"), v);
  }
  EXPECT_TRUE(std::isnan(ParseDouble(FormatDouble(std::nan("")), "t")));
  EXPECT_THROW(ParseDouble("1.2x", "t"), InvalidInput);
}

TEST(AudioTest, WavRoundTripIsExactForFloat) {
  testing::TempDir dir("wav");
  AudioClip c;
  c.samples = Eigen::VectorXd::LinSpaced(1000, -0.9, 0.9);
  WriteWav(dir / "x.wav", c);
  const AudioClip back = ReadWav(dir / "x.wav");
  EXPECT_EQ(back.sample_rate_hz, kSampleRate);
  ASSERT_EQ(back.size(), 1000);
  EXPECT_LT((back.samples - c.samples).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(ParallelTest, CoversEveryIndexAndPropagatesErrors) {
  std::vector<int> hit(1000, 0);
  ParallelFor(1000, [&](Index i) { hit[i]++; }, 3);
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(ParallelFor(10, [](Index i) { if (i == 7) throw InvalidInput("x"); }, 2),
               InvalidInput);
}

}  // namespace
}  // namespace sde
