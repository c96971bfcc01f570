// tests/acceptance/acceptance.cpp

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


// Acceptance suite: one PASS/FAIL line per criterion. With no arguments
// every criterion runs; otherwise only the listed numbers.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "sde/audio.hpp"
#include "sde/csv.hpp"
#include "sde/evaluation.hpp"
#include "sde/features.hpp"
#include "sde/model.hpp"
#include "sde/roomsim.hpp"
#include "sde/scenegen.hpp"
#include "sde/stats.hpp"
#include "sde/training.hpp"

namespace sde {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void Check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok " : "FAILED ") + what);
  }
};

std::string Fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("sde-accept-" + tag + "-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

ModelConfig Scaled(int divisor) {
  ModelConfig c;
  for (int& p : c.conv_filters) p /= divisor;
  for (int& p : c.attention_filters) p /= divisor;
  c.recurrent_width /= divisor;
  c.head_width /= divisor;
  return c;
}

// ------------------------------------------------------------ criterion 1

Outcome AcousticPhysics() {
  Outcome o;
  const SceneSpec base = SceneSpec::Make(RoomSpec::Uniform(Vec3(7.5, 9.0, 3.5), 0.3),
                                         Vec3(2, 3, 1.5), Vec3(4, 4, 1.2));
  bool law = true;
  for (int n = 0; n <= 4; ++n) {
    law = law && EnumerateImages(base, n).size() == static_cast<std::size_t>((2 * n + 1) * (2 * n + 1) * (2 * n + 1));
  }
  o.Check(law, "image count (2n+1)^3 for n = 0..4");

  const MaterialTable table = MaterialTable::Builtin();
  double worst_delay = 0.0, worst_reported = 0.0;
  std::vector<double> amp_d;
  for (int i = 0; i < 100; ++i) {
    const SceneSpec s = SampleScene(1000 + i, 1.0, 14.0, table);
    const double expected = s.distance_m * kSampleRate / kSpeedOfSound;
    worst_reported = std::max(worst_reported, std::abs(SynthesizeRir(s, -1, 0.1).direct_delay_samples - expected));
    // Coincident reflections can outweigh the direct tap, so the direct
    // arrival is located on the same scene with fully absorbing walls.
    SceneSpec anechoic = s;
    anechoic.room = RoomSpec::Uniform(s.room.dims, 1.0);
    const Rir direct = SynthesizeRir(anechoic, 0, 0.1);
    Index peak = 0;
    direct.taps.cwiseAbs().maxCoeff(&peak);
    worst_delay = std::max(worst_delay, std::abs(peak - expected));
    if (i < 20) amp_d.push_back(direct.taps.sum() * s.distance_m);
  }
  o.Check(worst_reported <= 1.0, "reported direct delay within 1 sample of d*fs/c over 100 scenes (worst " +
                                     Fmt(worst_reported, 3) + ")");
  o.Check(worst_delay <= 1.0, "direct-path peak within 1 sample of d*fs/c over 100 scenes (worst " +
                                  Fmt(worst_delay, 3) + ")");
  const auto [lo, hi] = std::minmax_element(amp_d.begin(), amp_d.end());
  const double spread = (*hi - *lo) / Mean(amp_d);
  o.Check(spread <= 0.01, "direct amplitude times d constant within 1% over 20 scenes (spread " +
                              Fmt(100 * spread, 3) + "%)");

  Rng rng(7);
  std::uniform_real_distribution<double> lx(3.0, 10.0), lz(2.5, 4.5), ua(0.15, 0.5);
  int within = 0;
  std::string ratios;
  for (int i = 0; i < 10; ++i) {
    const Vec3 dims(lx(rng), lx(rng), lz(rng));
    const double alpha = ua(rng);
    const SceneSpec s = SceneSpec::Make(RoomSpec::Uniform(dims, alpha),
                                        dims.cwiseProduct(Vec3(0.3, 0.4, 0.45)),
                                        dims.cwiseProduct(Vec3(0.7, 0.6, 0.5)));
    const Rir rir = SynthesizeRir(s);
    const double ratio = EstimateRt60(rir) / EyringRt60(s.room)[2];
    within += std::abs(ratio - 1.0) <= 0.25;
    ratios += (i ? " " : "") + Fmt(ratio, 3);
  }
  o.Check(within == 10, "simulated RT60 within 25% of Eyring in " + std::to_string(within) +
                            "/10 uniform rooms (ratios " + ratios + ")");
  return o;
}

// ------------------------------------------------------------ criterion 2

Outcome MaterialBracket() {
  Outcome o;
  const MaterialTable table = MaterialTable::Builtin();
  std::vector<double> rt(10000);
  for (int i = 0; i < 10000; ++i) rt[i] = MidBandEyringRt60(SampleScene(50000 + i, 1.0, 14.0, table).room);
  const double med = Percentile(rt, 50), p90 = Percentile(rt, 90);
  o.Check(med >= 0.6 && med <= 1.1, "median RT60 " + Fmt(med) + " s in [0.6, 1.1]");
  o.Check(p90 > 1.5, "90th percentile RT60 " + Fmt(p90) + " s > 1.5");
  return o;
}

// ------------------------------------------------------------ criterion 3

Outcome SnrCalibration() {
  Outcome o;
  const std::vector<double> listed = {50, 40, 30, 20, 10, 5, 0};
  Rng rng(10);
  std::uniform_real_distribution<double> snr_dist(-10.0, 60.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double snr = i < static_cast<int>(listed.size()) ? listed[i] : snr_dist(rng);
    const AudioClip clean = SpeechLikeExcitation(rng(), 1.0, i % 5);
    const AudioClip noise = PinkNoise(rng(), 1.5);
    const AudioClip mixed = MixNoise(clean, noise, snr, rng());
    const double measured =
        10.0 * std::log10(MeanPower(clean.samples) / MeanPower(mixed.samples - clean.samples));
    worst = std::max(worst, std::abs(measured - snr));
  }
  o.Check(worst <= 0.01, "re-measured SNR within 0.01 dB over 100 cases (worst " + Fmt(worst, 3) + " dB)");
  return o;
}

// ------------------------------------------------------------ criterion 4

Outcome FeatureSuite() {
  Outcome o;
  const AudioClip x = SpeechLikeExcitation(5, 10.0, 1);
  const FeatureTensor<double> f = ExtractFeatures(x);
  o.Check(f.frames() == 624 && f.bins() == 257,
          "10 s clip gives " + std::to_string(f.frames()) + " x " + std::to_string(f.bins()));
  const double unit = (f.channels[1].array().square() + f.channels[2].array().square() - 1.0).abs().maxCoeff();
  o.Check(unit <= 1e-6, "sin^2 + cos^2 = 1 (max deviation " + Fmt(unit, 3) + ")");

  AudioClip shifted = x;
  shifted.samples = x.samples.tail(x.size() - kStftHop);
  const FeatureTensor<double> g = ExtractFeatures(shifted);
  double shift_err = 0.0;
  for (int c = 0; c < 3; ++c) {
    shift_err = std::max(shift_err, (g.channels[c].topRows(g.frames()) -
                                     f.channels[c].middleRows(1, g.frames())).cwiseAbs().maxCoeff());
  }
  o.Check(shift_err <= 1e-9, "one-hop shift moves frames by one (max error " + Fmt(shift_err, 3) + ")");

  AudioClip scaled = x;
  scaled.samples *= 3.7;
  const FeatureTensor<double> h = ExtractFeatures(scaled);
  double phase_err = 0.0;
  for (int c = 1; c < 3; ++c) {
    // Bins at numerical zero carry the (0, 1) convention in both.
    const Eigen::ArrayXXd mask = (f.channels[0].array() > 1e-9).cast<double>();
    phase_err = std::max(phase_err, ((h.channels[c] - f.channels[c]).array() * mask).abs().maxCoeff());
  }
  const double mag_err = (h.channels[0] - 3.7 * f.channels[0]).cwiseAbs().maxCoeff() /
                         std::max(1e-12, f.channels[0].cwiseAbs().maxCoeff());
  o.Check(phase_err <= 1e-9 && mag_err <= 1e-12,
          "gain leaves phase channels unchanged (max error " + Fmt(phase_err, 3) + ")");
  return o;
}

// ------------------------------------------------------------ criterion 5

FeatureTensor<float> RandomFeatures(Index frames, ChannelSubset subset, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FeatureTensor<float> f;
  Eigen::MatrixXf mag(frames, kStftBins), s(frames, kStftBins), c(frames, kStftBins);
  for (Index j = 0; j < kStftBins; ++j) {
    for (Index i = 0; i < frames; ++i) {
      const double ph = 2.0 * kPi * u(rng);
      mag(i, j) = static_cast<float>(3.0 * u(rng));
      s(i, j) = static_cast<float>(std::sin(ph));
      c(i, j) = static_cast<float>(std::cos(ph));
    }
  }
  f.channels = {mag, s, c};
  f.tags = {FeatureChannel::kMagnitude, FeatureChannel::kSinPhase, FeatureChannel::kCosPhase};
  return SelectChannels(f, subset);
}

Outcome ShapeGrid() {
  Outcome o;
  int cells = 0, good = 0;
  for (KernelShape k : {KernelShape::kTime, KernelShape::kSquare, KernelShape::kFrequency}) {
    for (int layers : {0, 1, 2}) {
      for (AttentionMode a : {AttentionMode::kNone, AttentionMode::kSpectrogramOnly, AttentionMode::kAllChannels}) {
        for (ChannelSubset fs : {ChannelSubset::kAll, ChannelSubset::kMagnitudeOnly, ChannelSubset::kPhaseOnly}) {
          if (a == AttentionMode::kSpectrogramOnly && fs == ChannelSubset::kPhaseOnly) continue;
          ModelConfig c;
          c.frames = 9;
          c.kernel = k;
          c.recurrent_layers = layers;
          c.attention = a;
          c.features = fs;
          const Prediction<float> p = Predict(MakeModel<float>(c, 5), RandomFeatures(9, fs, 6));
          ++cells;
          good += p.utterance.size() == 1 && p.framewise.rows() == 1 && p.framewise.cols() == 9 &&
                  p.framewise.allFinite() && p.utterance.allFinite();
        }
      }
    }
  }
  o.Check(good == cells, std::to_string(good) + "/" + std::to_string(cells) +
                             " valid cells give a scalar and a length-T vector");
  const long total = CountParameters(ModelConfig()).total();
  o.Check(std::abs(total - 650000.0) <= 0.05 * 650000.0,
          "default parameter count " + std::to_string(total) + " within 5% of 650 k");
  ModelConfig t, s, f;
  t.kernel = KernelShape::kTime;
  s.kernel = KernelShape::kSquare;
  f.kernel = KernelShape::kFrequency;
  const long pt = CountParameters(t).total(), ps = CountParameters(s).total(), pf = CountParameters(f).total();
  o.Check(ps > pf && pf == pt, "square " + std::to_string(ps) + " > frequency " + std::to_string(pf) +
                                   " = time " + std::to_string(pt));
  return o;
}

// ------------------------------------------------------------ criterion 6

Outcome GradientCheck() {
  Outcome o;
  ModelConfig c;
  c.conv_filters = {2, 3, 4};
  c.attention_filters = {2, 3};
  c.recurrent_width = 4;
  c.head_width = 4;
  c.frames = 6;
  Model<double> m = MakeModel<double>(c, 100);
  std::vector<const FeatureTensor<float>*> items;
  const FeatureTensor<float> a = RandomFeatures(6, ChannelSubset::kAll, 101);
  const FeatureTensor<float> b = RandomFeatures(6, ChannelSubset::kAll, 102);
  const FeatureMap<double> x = StackFeatures<double>({&a, &b});
  VectorX<double> y(2);
  y << 2.5, 7.0;
  ZeroGrad(m);
  ForwardCache<double> cache;
  const Prediction<double> pred = Forward(m, x, true, &cache);
  const LossGrad<double> g = DualLossGrad(pred, y);
  Backward(m, cache, pred, g.d_framewise, g.d_utterance);
  std::vector<Param<double>*> params;
  Index total = 0;
  ForEachParameter(m, [&](const std::string&, Param<double>& p) {
    params.push_back(&p);
    total += p.value.size();
  });
  Rng rng(103);
  std::uniform_int_distribution<Index> pick(0, total - 1);
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    Index k = pick(rng);
    std::size_t pi = 0;
    while (k >= params[pi]->value.size()) k -= params[pi++]->value.size();
    double& w = params[pi]->value.data()[k];
    const double analytic = params[pi]->grad.data()[k];
    const double h = 1e-5 * std::max(1.0, std::abs(w));
    const double w0 = w;
    w = w0 + h;
    const double up = DualLoss(Forward(m, x, true), y);
    w = w0 - h;
    const double down = DualLoss(Forward(m, x, true), y);
    w = w0;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double floor = 1e-8 * std::max(1.0, std::abs(up));
    worst = std::max(worst, scale < floor ? 0.0 : std::abs(analytic - numeric) / scale);
  }
  o.Check(worst < 1e-3, "25 sampled parameters, worst relative error " + Fmt(worst, 3));
  return o;
}

// ------------------------------------------------------------ criterion 7

Outcome OverfitSmoke() {
  Outcome o;
  ScratchDir dir("overfit");
  SyntheticConfig sc;
  sc.num_scenes = 16;
  sc.split_counts = std::array<int, 3>{16, 0, 0};
  sc.duration_s = 1.0;
  sc.seed = 11;
  sc.write_rirs = false;
  DatasetManifest m = BuildSyntheticDataset(sc, dir.path() / "data");
  m.root = dir.path() / "data";
  const LabeledSet train = LabeledSet::FromManifest(m, Split::kTrain, 0, ChannelSubset::kAll, {});
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 16;
  tc.seed = 3;
  const TrainResult r = Train(train, train, Scaled(4), tc, dir.path() / "run");
  const double l1 = PredictSet(LoadCheckpoint<float>(r.best_checkpoint).model, train).l1;
  o.Check(l1 < 0.2, "16 clips, quarter width, 200 epochs: training L1 " + Fmt(l1) + " m < 0.2");
  return o;
}

// ------------------------------------------------------------ criterion 8

inline constexpr double kDeskClipSeconds = 4.0;
inline constexpr int kDeskEpochs = 45;

Outcome DeskGeneralization() {
  Outcome o;
  ScratchDir dir("desk");
  SyntheticConfig sc;
  sc.num_scenes = 300;
  sc.split_counts = std::array<int, 3>{240, 30, 30};
  sc.duration_s = kDeskClipSeconds;
  sc.d_min = 1.0;
  sc.d_max = 14.0;
  sc.seed = 11;
  sc.write_rirs = false;
  DatasetManifest m = BuildSyntheticDataset(sc, dir.path() / "data");
  m.root = dir.path() / "data";
  const fs::path cache = dir.path() / "features";
  const LabeledSet train = LabeledSet::FromManifest(m, Split::kTrain, 0, ChannelSubset::kAll, cache);
  const LabeledSet val = LabeledSet::FromManifest(m, Split::kVal, 0, ChannelSubset::kAll, cache);
  const LabeledSet test = LabeledSet::FromManifest(m, Split::kTest, 0, ChannelSubset::kAll, cache);
  TrainConfig tc;
  tc.epochs = kDeskEpochs;
  tc.batch_size = 16;
  tc.seed = 3;
  const TrainResult r = Train(train, val, ModelConfig().HalfWidth(), tc, dir.path() / "run");
  const Checkpoint<float> ck = LoadCheckpoint<float>(r.best_checkpoint);
  const BinSpec bins = BinSpec::Synthetic();
  const double l1 = BinnedReport(PredictRecords(ck.model, test, 0), bins, CiMode::kPerSample).average.l1->mean;
  const double base = BinnedReport(MeanPredictorRecords(train, test), bins, CiMode::kPerSample).average.l1->mean;
  o.Check(l1 <= 0.6 * base, "300 scenes, " + Fmt(kDeskClipSeconds, 2) + " s clips, half width, " +
                                std::to_string(kDeskEpochs) + " epochs: test L1 " + Fmt(l1) +
                                " m vs mean predictor " + Fmt(base) + " m (ratio " + Fmt(l1 / base, 3) +
                                ", limit 0.6)");
  return o;
}

// ------------------------------------------------------------ criterion 9

Outcome MetricOracles() {
  Outcome o;
  Rng rng(21);
  std::uniform_real_distribution<double> d(0.5, 16.0);
  std::normal_distribution<double> e(0.0, 0.8);
  std::vector<PredictionRecord> r;
  for (int i = 0; i < 500; ++i) {
    PredictionRecord p;
    p.id = std::to_string(i);
    p.y = d(rng);
    p.yhat = p.y + e(rng);
    p.fold = i % 5;
    r.push_back(p);
  }
  const BinSpec bins = BinSpec::Synthetic();
  bool exact = true;
  double worst_agg = 0.0;
  for (CiMode mode : {CiMode::kPerSample, CiMode::kPerFold}) {
    const EvalReport rep = BinnedReport(r, bins, mode);
    std::vector<double> sum(bins.size() + 2, 0.0), rsum(bins.size() + 2, 0.0);
    std::vector<std::size_t> n(bins.size() + 2, 0);
    for (const auto& p : r) {
      const int b = bins.Find(p.y);
      for (int g : {0, b < 0 ? bins.size() + 1 : b + 1}) {
        sum[g] += std::abs(p.y - p.yhat);
        rsum[g] += std::abs(p.y - p.yhat) / p.y;
        ++n[g];
      }
    }
    std::vector<const BinStats*> groups{&rep.average};
    for (const auto& b : rep.bins) groups.push_back(&b);
    groups.push_back(&rep.other);
    double weighted = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      exact = exact && groups[g]->count == n[g];
      if (n[g]) {
        exact = exact && groups[g]->l1->mean == sum[g] / n[g] && groups[g]->rl1->mean == rsum[g] / n[g];
        if (g > 0) weighted += n[g] * groups[g]->l1->mean;
      }
    }
    worst_agg = std::max(worst_agg, std::abs(weighted - rep.average.count * rep.average.l1->mean));
  }
  o.Check(exact, "L1, rL1 and bin counts equal the scalar-loop oracle exactly");
  o.Check(worst_agg <= 1e-9, "sum of count x bin mean equals the overall total (error " + Fmt(worst_agg, 3) + ")");

  const double sigma = 0.4;
  const int n = 1000;
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<PredictionRecord> mc;
  for (int i = 0; i < n; ++i) {
    PredictionRecord p;
    p.y = 5.0;
    p.yhat = 5.0 + noise(rng);
    mc.push_back(p);
  }
  const double half = BinnedReport(mc, bins, CiMode::kPerSample).average.l1->ci_half;
  const double expected = 1.96 * sigma * std::sqrt(1.0 - 2.0 / kPi) / std::sqrt(n);
  o.Check(std::abs(half - expected) <= 0.1 * expected,
          "per-sample CI half-width " + Fmt(half) + " vs 1.96 sigma/sqrt(n) = " + Fmt(expected));
  return o;
}

// ----------------------------------------------------------- criterion 10

int Sdelab(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "sdelab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream os, es;
  const int code = cli::Run(static_cast<int>(argv.size()), argv.data(), os, es);
  if (out) *out = os.str() + es.str();
  return code;
}

std::string TinyYaml(const fs::path& out, const std::string& extra) {
  return "out: " + out.string() +
         "\nseed: 3\n"
         "dataset: {kind: synthetic, num_scenes: 12, split_counts: [8, 2, 2], duration_s: 0.25,\n"
         "          write_rirs: false, rir: {length_s: 0.3}}\n"
         "model: {conv_filters: [2, 3, 4], attention_filters: [2, 3], recurrent_width: 4, head_width: 4}\n"
         "train: {epochs: 1, batch_size: 4}\n" +
         extra;
}

std::string ReadText(const fs::path& p) {
  std::ifstream is(p);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

fs::path Write(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
  return p;
}

Outcome HarnessFidelity() {
  Outcome o;
  ScratchDir dir("harness");
  const auto arch = Write(dir.path() / "arch.yaml", TinyYaml(dir.path() / "arch", "grid: architecture\n"));
  const auto att = Write(dir.path() / "att.yaml", TinyYaml(dir.path() / "arch", "grid: attention\n"));
  std::string log;
  const int g = Sdelab({"generate", "--config", arch.string()}, &log);
  const int a1 = Sdelab({"ablate", "--config", arch.string()}, &log);
  const ReportTable t1 = ParseReportCsv(ReadText(dir.path() / "arch/ablate/ablation.csv"));
  const int a2 = Sdelab({"ablate", "--config", att.string()}, &log);
  const ReportTable t2 = ParseReportCsv(ReadText(dir.path() / "arch/ablate/ablation.csv"));
  std::set<std::pair<std::string, std::string>> cells;
  for (const auto& row : t1.rows) cells.insert({row.keys[0], row.keys[1]});
  o.Check(g == 0 && a1 == 0 && t1.rows.size() == 9 && cells.size() == 9,
          "architecture ablation: " + std::to_string(t1.rows.size()) + " rows (kernel x recurrent depth)");
  std::set<std::string> modes;
  for (const auto& row : t2.rows) modes.insert(row.keys[2]);
  o.Check(a2 == 0 && t2.rows.size() == 3 && modes.size() == 3,
          "attention ablation: " + std::to_string(t2.rows.size()) + " rows (none, spectrogram_only, all_channels)");

  std::string corpora = "corpora:\n";
  std::vector<double> in_corpus;
  const std::vector<std::pair<std::string, std::string>> specs = {
      {"near", "d_min: 1.0, d_max: 4.0"}, {"mid", "d_min: 3.0, d_max: 8.0"}, {"far", "d_min: 6.0, d_max: 13.0"}};
  bool ok = true;
  for (const auto& [name, range] : specs) {
    std::string yaml = TinyYaml(dir.path() / name, "");
    yaml.replace(yaml.find("write_rirs"), 0, range + ", ");
    const auto cfg = Write(dir.path() / (name + ".yaml"), yaml);
    for (const char* cmd : {"generate", "train", "eval"}) ok = ok && Sdelab({cmd, "--config", cfg.string()}, &log) == 0;
    if (!ok) break;
    const ReportTable t = ParseReportCsv(ReadText(dir.path() / name / "eval/report.csv"));
    in_corpus.push_back(t.rows[0].report->average.l1->mean);
    corpora += "  - {name: " + name + ", config: " + cfg.string() + "}\n";
  }
  const auto cross = Write(dir.path() / "cross.yaml", "out: " + (dir.path() / "x").string() + "\n" + corpora);
  ok = ok && Sdelab({"crosscorpus", "--config", cross.string()}, &log) == 0;
  bool diag = ok;
  std::size_t rows = 0, cols = 0;
  if (ok) {
    const CsvTable m = ReadCsv(dir.path() / "x/crosscorpus/matrix.csv");
    rows = m.rows.size();
    cols = m.header.size() - 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(rows, 3); ++i) diag = diag && ParseDouble(m.rows[i][i + 1], "diagonal") == in_corpus[i];
  }
  o.Check(ok && rows == 3 && cols == 3 && diag,
          "cross-corpus matrix " + std::to_string(rows) + " x " + std::to_string(cols) +
              ", diagonal equal to in-corpus evaluation: " + (diag ? "yes" : "no"));
  if (!ok) o.notes.push_back("log: " + log);
  return o;
}

}  // namespace
}  // namespace sde

int main(int argc, char** argv) {
  using namespace sde;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"acoustic physics", AcousticPhysics},
      {"material randomization bracket", MaterialBracket},
      {"SNR calibration", SnrCalibration},
      {"feature suite", FeatureSuite},
      {"model shape grid", ShapeGrid},
      {"gradient check", GradientCheck},
      {"overfit smoke", OverfitSmoke},
      {"desk-scale generalization", DeskGeneralization},
      {"metric and report oracles", MetricOracles},
      {"harness fidelity", HarnessFidelity}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.Check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++run;
    failed += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
              << " (" << Fmt(secs, 3) << " s)\n";
    for (const auto& n : o.notes) std::cout << "    " << n << "\n";
    std::cout.flush();
  }
  std::cout << (run - failed) << "/" << run << " criteria passed\n";
  return failed ? 1 : 0;
}
