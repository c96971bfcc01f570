// src/scenegen.cpp

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

#include "sde/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "sde/csv.hpp"
#include "sde/dsp.hpp"
#include "sde/parallel.hpp"

namespace sde {

using nlohmann::json;

namespace {

// JSON has no infinities; they travel as strings.
json Number(double v) {
  if (std::isfinite(v)) return v;
  return FormatDouble(v);
}

double ToNumber(const json& j) {
  if (j.is_string()) return ParseDouble(j.get<std::string>(), "manifest number");
  return j.get<double>();
}

json Optional(const std::optional<double>& v) { return v ? Number(*v) : json(nullptr); }

std::optional<double> OptionalNumber(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return ToNumber(j[key]);
}

json VecJson(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::string PaddedId(const std::string& prefix, Index i, int width = 6) {
  std::ostringstream os;
  os << prefix << std::setw(width) << std::setfill('0') << i;
  return os.str();
}

std::vector<int> Permutation(int n, std::uint64_t seed) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

// Split label per item under ratio counts, after a seeded shuffle.
std::vector<Split> RatioAssignment(int n, const std::array<double, 3>& ratios,
                                   std::uint64_t seed) {
  const auto counts = RatioSplitCounts(n, ratios);
  const std::vector<int> perm = Permutation(n, seed);
  std::vector<Split> out(n);
  for (int i = 0; i < n; ++i) {
    out[perm[i]] = i < counts[0]              ? Split::kTrain
                   : i < counts[0] + counts[1] ? Split::kVal
                                               : Split::kTest;
  }
  return out;
}

std::vector<fs::path> ListWavs(const fs::path& dir, const std::string& what,
                               const std::string& layout) {
  if (!fs::is_directory(dir)) {
    throw InvalidInput(what + " directory '" + dir.string() + "' does not exist; expected " +
                       layout);
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw InvalidInput(what + " directory '" + dir.string() + "' holds no .wav files; expected " +
                       layout);
  }
  return files;
}

// Two-pole resonator at `freq` Hz with bandwidth `bw` Hz, unit peak gain.
void Resonate(Eigen::VectorXd& x, double freq, double bw) {
  const double r = std::exp(-kPi * bw / kSampleRate);
  const double c = 2.0 * r * std::cos(2.0 * kPi * freq / kSampleRate);
  const double g = 1.0 - r;
  double y1 = 0.0, y2 = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double y = g * x[i] + c * y1 - r * r * y2;
    y2 = y1;
    y1 = y;
    x[i] = y;
  }
}

void ApplyFade(Eigen::VectorXd& x, Index fade) {
  fade = std::min(fade, x.size() / 2);
  for (Index i = 0; i < fade; ++i) {
    const double w = 0.5 - 0.5 * std::cos(kPi * (i + 0.5) / fade);
    x[i] *= w;
    x[x.size() - 1 - i] *= w;
  }
}

Rir MeasuredRir(const fs::path& path) {
  const AudioClip clip = LoadClip(path);
  Rir rir;
  rir.taps = clip.samples;
  if (!(rir.Energy() > 0.0)) throw InvalidInput("measured RIR is silent: " + path.string());
  Index peak;
  rir.taps.cwiseAbs().maxCoeff(&peak);
  rir.direct_delay_samples = static_cast<double>(peak);
  const Rt60Estimate rt = EstimateRt60(rir.taps, kSampleRate);
  rir.rt60_s = rt.seconds;
  rir.rt60_flagged = rt.flagged;
  rir.drr_db = ComputeDrr(rir.taps, rir.direct_delay_samples, kSampleRate);
  rir.length_s = clip.duration_s();
  return rir;
}

// Convolve, normalise and optionally add noise. A silent dry draw is
// redrawn a few times before giving up.
AudioClip RenderClip(const SpeechCorpus& speech, const NoiseCorpus* noise,
                     std::optional<double> snr_db, const Rir& rir, Index samples,
                     std::uint64_t seed, std::string* source_id) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    const std::uint64_t s = MixSeed(seed, attempt);
    const AudioClip dry = speech.Draw(MixSeed(s, 1), samples);
    if (dry.samples.cwiseAbs().maxCoeff() == 0.0) continue;
    AudioClip wet = ConvolveScene(dry, rir, samples);
    if (wet.samples.cwiseAbs().maxCoeff() == 0.0) continue;
    PeakNormalize(wet.samples);
    if (snr_db && noise != nullptr) {
      wet = MixNoise(wet, noise->Draw(MixSeed(s, 2), samples), *snr_db, MixSeed(s, 3));
    }
    *source_id = dry.source_id;
    return wet;
  }
  throw Error("speech source produced only silent excerpts");
}

}  // namespace

std::string ToString(Realism r) {
  switch (r) {
    case Realism::kSynthetic: return "synthetic";
    case Realism::kHybrid: return "hybrid";
    case Realism::kReal: return "real";
  }
  return "synthetic";
}

Realism RealismFromString(const std::string& s) {
  if (s == "synthetic") return Realism::kSynthetic;
  if (s == "hybrid") return Realism::kHybrid;
  if (s == "real") return Realism::kReal;
  throw InvalidInput("unknown realism '" + s + "'");
}

std::string ToString(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split SplitFromString(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw InvalidInput("unknown split '" + s + "'");
}

// ---------------------------------------------------------------- manifest

json DatasetEntry::ToJson() const {
  json j;
  j["id"] = id;
  j["clip_path"] = clip_path;
  j["distance_m"] = distance_m;
  if (split) j["split"] = ToString(*split);
  if (fold >= 0) j["fold"] = fold;
  j["snr_db"] = Optional(snr_db);
  j["rt60_s"] = Optional(rt60_s);
  j["drr_db"] = Optional(drr_db);
  j["room_id"] = room_id;
  j["source_id"] = source_id;
  j["seed"] = seed;
  j["scene"] = scene.is_null() ? json::object() : scene;
  return j;
}

DatasetEntry DatasetEntry::FromJson(const json& j) {
  DatasetEntry e;
  try {
    e.id = j.at("id").get<std::string>();
    e.clip_path = j.at("clip_path").get<std::string>();
    e.distance_m = ToNumber(j.at("distance_m"));
    if (j.contains("split")) e.split = SplitFromString(j["split"].get<std::string>());
    if (j.contains("fold")) e.fold = j["fold"].get<int>();
    e.snr_db = OptionalNumber(j, "snr_db");
    e.rt60_s = OptionalNumber(j, "rt60_s");
    e.drr_db = OptionalNumber(j, "drr_db");
    e.room_id = j.value("room_id", "");
    e.source_id = j.value("source_id", "");
    e.seed = j.value("seed", std::uint64_t{0});
    e.scene = j.value("scene", json::object());
  } catch (const json::exception& ex) {
    throw InvalidInput(std::string("manifest entry: ") + ex.what());
  }
  return e;
}

void DatasetManifest::Validate() const {
  std::set<std::string> ids, paths;
  const std::optional<double> declared_snr =
      info.contains("snr_db") ? OptionalNumber(info, "snr_db") : std::nullopt;
  const bool declares_snr = info.contains("snr_db");
  for (const DatasetEntry& e : entries) {
    if (!ids.insert(e.id).second) throw InvalidInput("duplicate manifest id '" + e.id + "'");
    if (!paths.insert(e.clip_path).second) {
      throw InvalidInput("duplicate clip path '" + e.clip_path + "'");
    }
    if (!(e.distance_m > 0.0) || !std::isfinite(e.distance_m)) {
      throw InvalidInput("entry '" + e.id + "' has non-positive distance");
    }
    const bool has_fold = e.fold >= 0;
    if (has_fold == e.split.has_value()) {
      throw InvalidInput("entry '" + e.id + "' must carry exactly one of split / fold");
    }
    if (num_folds > 0 && (!has_fold || e.fold >= num_folds)) {
      throw InvalidInput("entry '" + e.id + "' has no valid fold for a " +
                         std::to_string(num_folds) + "-fold manifest");
    }
    if (num_folds == 0 && has_fold) {
      throw InvalidInput("entry '" + e.id + "' has a fold in a fixed-split manifest");
    }
    if (declares_snr && e.snr_db.has_value() != declared_snr.has_value()) {
      throw InvalidInput("entry '" + e.id + "' snr_db disagrees with the build");
    }
  }
  if (info.contains("split_counts") && num_folds == 0) {
    const auto sizes = SplitSizes();
    const auto& c = info["split_counts"];
    if (sizes.at("train") != c.at(0).get<std::size_t>() ||
        sizes.at("val") != c.at(1).get<std::size_t>() ||
        sizes.at("test") != c.at(2).get<std::size_t>()) {
      throw InvalidInput("split sizes do not match the declared split counts");
    }
  }
}

std::vector<const DatasetEntry*> DatasetManifest::Select(Split split, int fold) const {
  std::vector<const DatasetEntry*> out;
  if (num_folds > 0 && (fold < 0 || fold >= num_folds)) {
    throw InvalidInput("fold " + std::to_string(fold) + " outside [0, " +
                       std::to_string(num_folds) + ")");
  }
  for (const DatasetEntry& e : entries) {
    Split s;
    if (num_folds > 0) {
      s = e.fold == fold                     ? Split::kTest
          : e.fold == (fold + 1) % num_folds ? Split::kVal
                                             : Split::kTrain;
    } else {
      s = e.split.value_or(Split::kTrain);
    }
    if (s == split) out.push_back(&e);
  }
  return out;
}

std::map<std::string, std::size_t> DatasetManifest::SplitSizes(int fold) const {
  std::map<std::string, std::size_t> out;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    out[ToString(s)] = entries.empty() ? 0 : Select(s, fold).size();
  }
  return out;
}

std::string ManifestToJsonl(const DatasetManifest& m) {
  json header;
  header["schema"] = "sdelab.manifest";
  header["schema_version"] = kManifestSchemaVersion;
  header["realism"] = ToString(m.realism);
  header["config_hash"] = m.config_hash;
  header["num_folds"] = m.num_folds;
  header["duration_s"] = m.duration_s;
  header["num_entries"] = m.entries.size();
  header["info"] = m.info;
  std::string out = header.dump() + "\n";
  for (const DatasetEntry& e : m.entries) out += e.ToJson().dump() + "\n";
  return out;
}

DatasetManifest ManifestFromJsonl(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  DatasetManifest m;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t declared = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      throw InvalidInput("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (!have_header) {
      if (j.value("schema", "") != "sdelab.manifest") {
        throw InvalidInput("manifest header missing schema 'sdelab.manifest'");
      }
      const int version = j.value("schema_version", 0);
      if (version != kManifestSchemaVersion) {
        throw InvalidInput("unsupported manifest schema_version " + std::to_string(version));
      }
      m.realism = RealismFromString(j.at("realism").get<std::string>());
      m.config_hash = j.value("config_hash", "");
      m.num_folds = j.value("num_folds", 0);
      m.duration_s = j.value("duration_s", 0.0);
      m.info = j.value("info", json::object());
      declared = j.value("num_entries", std::size_t{0});
      have_header = true;
      continue;
    }
    m.entries.push_back(DatasetEntry::FromJson(j));
  }
  if (!have_header) throw InvalidInput("manifest is empty");
  if (declared != m.entries.size()) {
    throw InvalidInput("manifest declares " + std::to_string(declared) + " entries but holds " +
                       std::to_string(m.entries.size()));
  }
  m.Validate();
  return m;
}

void WriteManifest(const fs::path& path, const DatasetManifest& m) {
  m.Validate();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw InvalidInput("cannot write manifest " + path.string());
    os << ManifestToJsonl(m);
  }
  fs::rename(tmp, path);
}

DatasetManifest ReadManifest(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  DatasetManifest m = ManifestFromJsonl(ss.str());
  m.root = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return m;
}

// -------------------------------------------------------------- audio ops

AudioClip ConvolveScene(const AudioClip& dry, const Rir& rir, Index target_samples) {
  if (dry.sample_rate_hz != rir.sample_rate_hz) {
    throw InvalidInput("sample rate mismatch: clip " + std::to_string(dry.sample_rate_hz) +
                       " Hz, RIR " + std::to_string(rir.sample_rate_hz) + " Hz");
  }
  if (dry.size() == 0 || dry.samples.cwiseAbs().maxCoeff() == 0.0) {
    throw InvalidInput("dry clip '" + dry.source_id + "' is silent");
  }
  if (rir.taps.size() == 0) throw InvalidInput("RIR is empty");
  AudioClip out;
  out.sample_rate_hz = dry.sample_rate_hz;
  out.source_id = dry.source_id;
  out.samples = FftConvolve(dry.samples, rir.taps);
  if (target_samples > 0) {
    const Index keep = std::min(target_samples, out.samples.size());
    Eigen::VectorXd y = Eigen::VectorXd::Zero(target_samples);
    y.head(keep) = out.samples.head(keep);
    out.samples = std::move(y);
  }
  return out;
}

double NoiseGain(double p_clean, double p_noise, double snr_db) {
  if (!(p_clean > 0.0)) throw InvalidInput("clean signal has zero power");
  if (!(p_noise > 0.0)) throw InvalidInput("noise has zero power");
  return std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
}

AudioClip MixNoise(const AudioClip& clean, const AudioClip& noise, double snr_db,
                   std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0.0) return clean;
  if (std::isnan(snr_db)) throw InvalidInput("SNR is NaN");
  if (noise.size() < clean.size()) {
    throw InvalidInput("noise (" + std::to_string(noise.size()) +
                       " samples) shorter than the clean clip (" +
                       std::to_string(clean.size()) + ")");
  }
  Rng rng(MixSeed(seed, 0x401));
  const Index offset = std::uniform_int_distribution<Index>(0, noise.size() - clean.size())(rng);
  const auto segment = noise.samples.segment(offset, clean.size());
  const double g = NoiseGain(MeanPower(clean.samples), MeanPower(segment), snr_db);
  AudioClip out = clean;
  out.samples += g * segment;
  return out;
}

void PeakNormalize(Eigen::VectorXd& x, double peak) {
  const double m = x.size() ? x.cwiseAbs().maxCoeff() : 0.0;
  if (!(m > 0.0)) throw InvalidInput("cannot peak-normalise a silent clip");
  x *= peak / m;
}

AudioClip SpeechLikeExcitation(std::uint64_t seed, double duration_s, int voice) {
  if (!(duration_s > 0.0)) throw InvalidInput("duration must be positive");
  Rng voice_rng(MixSeed(static_cast<std::uint64_t>(voice), 0x70ce));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double base_f0 = 90.0 + 140.0 * unit(voice_rng);
  const double tract = 0.85 + 0.3 * unit(voice_rng);

  Rng rng(MixSeed(seed, 0x5eec + static_cast<std::uint64_t>(voice)));
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::normal_distribution<double> gauss;

  const Index n = static_cast<Index>(std::llround(duration_s * kSampleRate));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Index t = static_cast<Index>(uni(0.0, 0.25) * kSampleRate);
  while (t < n) {
    Eigen::VectorXd seg;
    if (unit(rng) < 0.8) {
      // Voiced syllable: gliding pitch, three formants.
      const Index len = static_cast<Index>(uni(0.08, 0.30) * kSampleRate);
      seg = Eigen::VectorXd::Zero(len);
      const double f_start = base_f0 * uni(0.85, 1.2);
      const double f_end = f_start * uni(0.85, 1.12);
      double phase = 0.0;
      for (Index i = 0; i < len; ++i) {
        const double f0 = f_start + (f_end - f_start) * i / len;
        phase += f0 / kSampleRate;
        if (phase >= 1.0) {
          phase -= 1.0;
          seg[i] += 1.0;
        }
        seg[i] += 0.02 * gauss(rng);
      }
      // Glottal roll-off.
      double y = 0.0;
      for (Index i = 0; i < len; ++i) seg[i] = y = 0.95 * y + seg[i];
      Resonate(seg, uni(300.0, 850.0) * tract, uni(60.0, 120.0));
      Eigen::VectorXd f2 = seg, f3 = seg;
      Resonate(f2, uni(850.0, 2400.0) * tract, uni(80.0, 160.0));
      Resonate(f3, uni(2200.0, 3300.0) * tract, uni(120.0, 250.0));
      seg += 0.6 * f2 + 0.3 * f3;
    } else {
      // Fricative: high-passed noise burst.
      const Index len = static_cast<Index>(uni(0.05, 0.15) * kSampleRate);
      seg.resize(len);
      double prev = 0.0;
      for (Index i = 0; i < len; ++i) {
        const double w = gauss(rng);
        seg[i] = w - prev;
        prev = w;
      }
      Resonate(seg, uni(3000.0, 6000.0), uni(800.0, 2000.0));
      seg *= 0.3;
    }
    ApplyFade(seg, static_cast<Index>(0.015 * kSampleRate));
    const double peak = seg.cwiseAbs().maxCoeff();
    if (peak > 0.0) seg *= uni(0.4, 1.0) / peak;
    const Index len = std::min<Index>(seg.size(), n - t);
    x.segment(t, len) += seg.head(len);
    t += seg.size();
    t += static_cast<Index>((unit(rng) < 0.75 ? uni(0.02, 0.12) : uni(0.2, 0.6)) * kSampleRate);
  }
  AudioClip clip;
  clip.samples = std::move(x);
  clip.source_id = "voice" + std::to_string(voice);
  return clip;
}

AudioClip PinkNoise(std::uint64_t seed, double duration_s) {
  Rng rng(MixSeed(seed, 0x9177));
  std::normal_distribution<double> gauss;
  const Index n = static_cast<Index>(std::llround(duration_s * kSampleRate));
  Eigen::VectorXd x(n);
  // Kellet's economy filter bank for a -3 dB/octave slope.
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (Index i = 0; i < n; ++i) {
    const double w = gauss(rng);
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    x[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
  }
  x.array() -= x.mean();
  const double rms = std::sqrt(MeanPower(x));
  if (rms > 0.0) x /= rms;
  AudioClip clip;
  clip.samples = std::move(x);
  clip.source_id = "pink";
  return clip;
}

SpeechCorpus SpeechCorpus::FromDirectory(const fs::path& dir) {
  SpeechCorpus c;
  c.files_ = ListWavs(dir, "speech corpus",
                      "a directory tree of mono WAV files (>= 1 s each, any sample rate)");
  return c;
}

SpeechCorpus SpeechCorpus::Generated(int num_voices) {
  if (num_voices < 1) throw InvalidInput("generated corpus needs at least one voice");
  SpeechCorpus c;
  c.num_voices_ = num_voices;
  return c;
}

AudioClip SpeechCorpus::Draw(std::uint64_t seed, Index samples) const {
  Rng rng(MixSeed(seed, 0xd7a));
  if (generated()) {
    const int voice = std::uniform_int_distribution<int>(0, num_voices_ - 1)(rng);
    AudioClip c = SpeechLikeExcitation(rng(), static_cast<double>(samples) / kSampleRate, voice);
    c.samples.conservativeResize(samples);
    return c;
  }
  const fs::path& file =
      files_[std::uniform_int_distribution<std::size_t>(0, files_.size() - 1)(rng)];
  AudioClip c = LoadClip(file);
  c.source_id = file.stem().string();
  if (c.size() >= samples) {
    const Index off = std::uniform_int_distribution<Index>(0, c.size() - samples)(rng);
    c.samples = c.samples.segment(off, samples).eval();
  } else {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(samples);
    y.head(c.size()) = c.samples;
    c.samples = std::move(y);
  }
  return c;
}

NoiseCorpus NoiseCorpus::FromDirectory(const fs::path& dir) {
  NoiseCorpus c;
  c.files_ = ListWavs(dir, "noise corpus", "a directory tree of mono WAV noise recordings");
  return c;
}

AudioClip NoiseCorpus::Draw(std::uint64_t seed, Index samples) const {
  Rng rng(MixSeed(seed, 0x2015e));
  if (files_.empty()) {
    return PinkNoise(rng(), static_cast<double>(samples + kSampleRate) / kSampleRate);
  }
  const fs::path& file =
      files_[std::uniform_int_distribution<std::size_t>(0, files_.size() - 1)(rng)];
  AudioClip c = LoadClip(file);
  if (c.size() == 0) throw InvalidInput("noise file is empty: " + file.string());
  if (c.size() < samples) {
    // Tile short recordings.
    Eigen::VectorXd y(samples);
    for (Index i = 0; i < samples; ++i) y[i] = c.samples[i % c.size()];
    c.samples = std::move(y);
  }
  c.source_id = file.stem().string();
  return c;
}

// ---------------------------------------------------------------- configs

json SyntheticConfig::ToJson() const {
  json j;
  j["num_scenes"] = num_scenes;
  j["num_folds"] = num_folds;
  j["split_counts"] = split_counts ? json(*split_counts) : json(nullptr);
  j["duration_s"] = duration_s;
  j["d_min"] = d_min;
  j["d_max"] = d_max;
  j["speech_dir"] = speech_dir;
  j["noise_dir"] = noise_dir;
  j["snr_db"] = Optional(snr_db);
  j["seed"] = seed;
  j["material_table"] = material_table;
  j["sampling"] = {{"dims_min", VecJson(sampling.dims_min)},
                   {"dims_max", VecJson(sampling.dims_max)},
                   {"placement_retries", sampling.placement_retries},
                   {"room_retries", sampling.room_retries}};
  j["rir"] = {{"max_order", rir.max_order},
              {"length_s", rir.length_s},
              {"min_length_s", rir.min_length_s},
              {"max_length_s", rir.max_length_s},
              {"fractional_delay_window_s", rir.fractional_delay_window_s},
              {"sinc_taps", rir.sinc_taps},
              {"reflection_highpass_hz", rir.reflection_highpass_hz}};
  j["write_rirs"] = write_rirs;
  return j;
}

json HybridConfig::ToJson() const {
  return {{"rir_csv", rir_csv},         {"speech_dir", speech_dir},
          {"noise_dir", noise_dir},     {"snr_db", Optional(snr_db)},
          {"clips_per_rir", clips_per_rir}, {"duration_s", duration_s},
          {"ratios", ratios},           {"seed", seed}};
}

json RealConfig::ToJson() const {
  return {{"annotations_dir", annotations_dir}, {"audio_dir", audio_dir},
          {"excerpt_s", excerpt_s},             {"hop_s", hop_s},
          {"frame_s", frame_s},                 {"speech_label", speech_label},
          {"ratios", ratios},                   {"seed", seed}};
}

namespace {

Vec3 VecFromJson(const json& j, const std::string& key) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw InvalidInput(key + " needs three values");
  return Vec3(v[0], v[1], v[2]);
}

std::optional<double> OptionalFromJson(const json& v) {
  if (v.is_null()) return std::nullopt;
  return ToNumber(v);
}

}  // namespace

SyntheticConfig SyntheticConfig::FromJson(const json& j) {
  SyntheticConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "num_scenes") c.num_scenes = v.get<int>();
    else if (key == "num_folds") c.num_folds = v.get<int>();
    else if (key == "split_counts") {
      if (v.is_null()) c.split_counts.reset();
      else c.split_counts = v.get<std::array<int, 3>>();
    } else if (key == "duration_s") c.duration_s = v.get<double>();
    else if (key == "d_min") c.d_min = v.get<double>();
    else if (key == "d_max") c.d_max = v.get<double>();
    else if (key == "speech_dir") c.speech_dir = v.get<std::string>();
    else if (key == "noise_dir") c.noise_dir = v.get<std::string>();
    else if (key == "snr_db") c.snr_db = OptionalFromJson(v);
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "material_table") c.material_table = v.get<std::string>();
    else if (key == "write_rirs") c.write_rirs = v.get<bool>();
    else if (key == "sampling") {
      for (const auto& [k, w] : v.items()) {
        if (k == "dims_min") c.sampling.dims_min = VecFromJson(w, k);
        else if (k == "dims_max") c.sampling.dims_max = VecFromJson(w, k);
        else if (k == "placement_retries") c.sampling.placement_retries = w.get<int>();
        else if (k == "room_retries") c.sampling.room_retries = w.get<int>();
        else throw InvalidInput("unknown sampling key '" + k + "'");
      }
    } else if (key == "rir") {
      for (const auto& [k, w] : v.items()) {
        if (k == "max_order") c.rir.max_order = w.get<int>();
        else if (k == "length_s") c.rir.length_s = w.get<double>();
        else if (k == "min_length_s") c.rir.min_length_s = w.get<double>();
        else if (k == "max_length_s") c.rir.max_length_s = w.get<double>();
        else if (k == "fractional_delay_window_s") c.rir.fractional_delay_window_s = w.get<double>();
        else if (k == "sinc_taps") c.rir.sinc_taps = w.get<int>();
        else if (k == "reflection_highpass_hz") c.rir.reflection_highpass_hz = w.get<double>();
        else throw InvalidInput("unknown rir key '" + k + "'");
      }
    } else {
      throw InvalidInput("unknown synthetic dataset key '" + key + "'");
    }
  }
  return c;
}

HybridConfig HybridConfig::FromJson(const json& j) {
  HybridConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "rir_csv") c.rir_csv = v.get<std::string>();
    else if (key == "speech_dir") c.speech_dir = v.get<std::string>();
    else if (key == "noise_dir") c.noise_dir = v.get<std::string>();
    else if (key == "snr_db") c.snr_db = OptionalFromJson(v);
    else if (key == "clips_per_rir") c.clips_per_rir = v.get<int>();
    else if (key == "duration_s") c.duration_s = v.get<double>();
    else if (key == "ratios") c.ratios = v.get<std::array<double, 3>>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw InvalidInput("unknown hybrid dataset key '" + key + "'");
  }
  return c;
}

RealConfig RealConfig::FromJson(const json& j) {
  RealConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "annotations_dir") c.annotations_dir = v.get<std::string>();
    else if (key == "audio_dir") c.audio_dir = v.get<std::string>();
    else if (key == "excerpt_s") c.excerpt_s = v.get<double>();
    else if (key == "hop_s") c.hop_s = v.get<double>();
    else if (key == "frame_s") c.frame_s = v.get<double>();
    else if (key == "speech_label") c.speech_label = v.get<std::string>();
    else if (key == "ratios") c.ratios = v.get<std::array<double, 3>>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw InvalidInput("unknown real dataset key '" + key + "'");
  }
  return c;
}

std::array<int, 3> RatioSplitCounts(int n, const std::array<double, 3>& ratios) {
  for (double r : ratios) {
    if (!(r >= 0.0)) throw InvalidInput("split ratios must be non-negative");
  }
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(total > 0.0)) throw InvalidInput("split ratios sum to zero");
  const int val = static_cast<int>(std::lround(n * ratios[1] / total));
  const int test = static_cast<int>(std::lround(n * ratios[2] / total));
  return {std::max(0, n - val - test), val, test};
}

// --------------------------------------------------------------- builders

DatasetManifest BuildSyntheticDataset(const SyntheticConfig& cfg, const fs::path& out_dir) {
  if (cfg.num_scenes < 1) throw InvalidInput("num_scenes must be positive");
  if (!(cfg.duration_s > 0.0)) throw InvalidInput("duration_s must be positive");
  if (cfg.split_counts) {
    const auto& c = *cfg.split_counts;
    if (c[0] < 0 || c[1] < 0 || c[2] < 0 || c[0] + c[1] + c[2] != cfg.num_scenes) {
      throw InvalidInput("split_counts must be non-negative and sum to num_scenes");
    }
  } else if (cfg.num_folds < 3) {
    throw InvalidInput("k-fold builds need at least 3 folds");
  }
  if (cfg.snr_db && std::isnan(*cfg.snr_db)) throw InvalidInput("snr_db is NaN");

  MaterialTable table = MaterialTable::Builtin();
  if (!cfg.material_table.empty()) {
    std::ifstream is(cfg.material_table);
    if (!is) throw InvalidInput("cannot open material table " + cfg.material_table);
    std::ostringstream ss;
    ss << is.rdbuf();
    table = MaterialTable::FromJson(ss.str());
  }
  const SpeechCorpus speech = cfg.speech_dir.empty()
                                  ? SpeechCorpus::Generated()
                                  : SpeechCorpus::FromDirectory(cfg.speech_dir);
  const bool noisy = cfg.snr_db && std::isfinite(*cfg.snr_db);
  const NoiseCorpus noise = cfg.noise_dir.empty() ? NoiseCorpus::Generated()
                                                  : NoiseCorpus::FromDirectory(cfg.noise_dir);
  fs::create_directories(out_dir / "audio");
  if (cfg.write_rirs) fs::create_directories(out_dir / "rirs");

  const int n = cfg.num_scenes;
  const Index samples = static_cast<Index>(std::llround(cfg.duration_s * kSampleRate));
  const std::vector<int> perm = Permutation(n, MixSeed(cfg.seed, 0xf01d));
  std::vector<DatasetEntry> entries(n);

  ParallelFor(n, [&](Index i) {
    const std::uint64_t scene_seed = MixSeed(cfg.seed, static_cast<std::uint64_t>(i));
    const SceneSpec scene = SampleScene(scene_seed, cfg.d_min, cfg.d_max, table, cfg.sampling);
    const Rir rir = SynthesizeRir(scene, cfg.rir);
    DatasetEntry& e = entries[i];
    e.id = PaddedId("syn-", i);
    const AudioClip clip = RenderClip(speech, noisy ? &noise : nullptr, cfg.snr_db, rir,
                                      samples, MixSeed(scene_seed, 7), &e.source_id);
    e.clip_path = "audio/" + e.id + ".wav";
    WriteWav(out_dir / e.clip_path, clip);

    e.distance_m = scene.distance_m;
    e.snr_db = noisy ? cfg.snr_db : std::nullopt;
    e.rt60_s = rir.rt60_s;
    e.drr_db = rir.drr_db;
    e.room_id = PaddedId("room-", i);
    e.seed = scene_seed;
    json materials = json::array();
    for (const Material& m : scene.room.materials) materials.push_back(m.name);
    e.scene = {{"room_dims", VecJson(scene.room.dims)},
               {"source_pos", VecJson(scene.source_pos)},
               {"mic_pos", VecJson(scene.mic_pos)},
               {"materials", materials},
               {"elevation_deg", scene.ElevationDeg()},
               {"eyring_rt60_s", MidBandEyringRt60(scene.room)},
               {"direct_delay_samples", rir.direct_delay_samples},
               {"max_order", rir.max_order},
               {"rir_length_s", rir.length_s},
               {"decay_truncated", rir.decay_truncated},
               {"rt60_flagged", rir.rt60_flagged}};
    if (cfg.write_rirs) {
      const std::string rir_path = "rirs/" + e.id + ".wav";
      AudioClip rir_clip;
      rir_clip.samples = rir.taps;
      WriteWav(out_dir / rir_path, rir_clip);
      e.scene["rir_path"] = rir_path;
      json sidecar = e.scene;
      sidecar["distance_m"] = scene.distance_m;
      sidecar["rt60_s"] = rir.rt60_s;
      sidecar["drr_db"] = Number(rir.drr_db);
      sidecar["seed"] = scene_seed;
      std::ofstream os(out_dir / ("rirs/" + e.id + ".json"));
      os << sidecar.dump(2) << "\n";
    }
  });

  // Split assignment by position in a seeded permutation.
  for (int rank = 0; rank < n; ++rank) {
    DatasetEntry& e = entries[perm[rank]];
    if (cfg.split_counts) {
      const auto& c = *cfg.split_counts;
      e.split = rank < c[0] ? Split::kTrain : rank < c[0] + c[1] ? Split::kVal : Split::kTest;
    } else {
      e.fold = rank % cfg.num_folds;
    }
  }

  DatasetManifest m;
  m.realism = Realism::kSynthetic;
  m.config_hash = HexDigest(Fnv1a(cfg.ToJson().dump()));
  m.num_folds = cfg.split_counts ? 0 : cfg.num_folds;
  m.duration_s = static_cast<double>(samples) / kSampleRate;
  m.info = {{"peak_normalization", kPeakLevel},
            {"snr_db", noisy ? json(*cfg.snr_db) : json(nullptr)},
            {"snr_measure", "full-signal mean power"},
            {"noise_placement", "post-convolution"},
            {"speech_source", cfg.speech_dir.empty() ? "generated" : cfg.speech_dir},
            {"material_table_version", table.version},
            {"config", cfg.ToJson()}};
  if (cfg.split_counts) m.info["split_counts"] = *cfg.split_counts;
  m.entries = std::move(entries);
  m.root = out_dir;
  m.Validate();
  return m;
}

DatasetManifest BuildHybridDataset(const HybridConfig& cfg, const fs::path& out_dir) {
  if (cfg.clips_per_rir < 1) throw InvalidInput("clips_per_rir must be positive");
  if (!(cfg.duration_s > 0.0)) throw InvalidInput("duration_s must be positive");
  const CsvTable csv = ReadCsv(cfg.rir_csv);
  const std::string ctx = "RIR list " + cfg.rir_csv;
  const int c_path = csv.RequireColumn("rir_path", ctx);
  const int c_dist = csv.RequireColumn("distance_m", ctx);
  const int c_room = csv.Column("room_id");
  const fs::path base = fs::path(cfg.rir_csv).parent_path();

  struct RirRow {
    fs::path path;
    double distance;
    std::string room;
  };
  std::vector<RirRow> rirs;
  json skipped = json::array();
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::string path = c_path < static_cast<int>(row.size()) ? row[c_path] : "";
    const std::string dist = c_dist < static_cast<int>(row.size()) ? row[c_dist] : "";
    double d = std::nan("");
    try {
      if (!dist.empty()) d = ParseDouble(dist, ctx);
    } catch (const InvalidInput&) {
    }
    if (path.empty() || !(d > 0.0) || !std::isfinite(d)) {
      std::cerr << "warning: " << ctx << " row " << r + 2
                << " has no usable distance annotation; skipped\n";
      skipped.push_back({{"row", r + 2}, {"rir_path", path}});
      continue;
    }
    const fs::path p = fs::path(path).is_absolute() ? fs::path(path) : base / path;
    const std::string room =
        c_room >= 0 && c_room < static_cast<int>(row.size()) ? row[c_room] : "";
    rirs.push_back({p, d, room});
  }

  const SpeechCorpus speech = cfg.speech_dir.empty()
                                  ? SpeechCorpus::Generated()
                                  : SpeechCorpus::FromDirectory(cfg.speech_dir);
  const bool noisy = cfg.snr_db && std::isfinite(*cfg.snr_db);
  const NoiseCorpus noise = cfg.noise_dir.empty() ? NoiseCorpus::Generated()
                                                  : NoiseCorpus::FromDirectory(cfg.noise_dir);
  fs::create_directories(out_dir / "audio");
  const int n_rirs = static_cast<int>(rirs.size());
  const std::vector<Split> splits = RatioAssignment(n_rirs, cfg.ratios, MixSeed(cfg.seed, 0x5b1));
  const Index samples = static_cast<Index>(std::llround(cfg.duration_s * kSampleRate));
  const int k = cfg.clips_per_rir;
  std::vector<DatasetEntry> entries(static_cast<std::size_t>(n_rirs) * k);

  ParallelFor(n_rirs, [&](Index r) {
    const Rir rir = MeasuredRir(rirs[r].path);
    const std::string rir_id = PaddedId("rir-", r, 4);
    for (int c = 0; c < k; ++c) {
      DatasetEntry& e = entries[r * k + c];
      e.seed = MixSeed(cfg.seed, static_cast<std::uint64_t>(r * k + c));
      e.id = "hyb-" + rir_id.substr(4) + "-" + std::to_string(c);
      const AudioClip clip = RenderClip(speech, noisy ? &noise : nullptr, cfg.snr_db, rir,
                                        samples, e.seed, &e.source_id);
      e.clip_path = "audio/" + e.id + ".wav";
      WriteWav(out_dir / e.clip_path, clip);
      e.distance_m = rirs[r].distance;
      e.split = splits[r];
      e.snr_db = noisy ? cfg.snr_db : std::nullopt;
      e.rt60_s = rir.rt60_s;
      e.drr_db = rir.drr_db;
      e.room_id = rirs[r].room;
      e.scene = {{"rir_id", rir_id},
                 {"rir_path", rirs[r].path.string()},
                 {"direct_delay_samples", rir.direct_delay_samples},
                 {"rt60_flagged", rir.rt60_flagged}};
    }
  });

  DatasetManifest m;
  m.realism = Realism::kHybrid;
  m.config_hash = HexDigest(Fnv1a(cfg.ToJson().dump()));
  m.duration_s = static_cast<double>(samples) / kSampleRate;
  const auto counts = RatioSplitCounts(n_rirs, cfg.ratios);
  m.info = {{"peak_normalization", kPeakLevel},
            {"snr_db", noisy ? json(*cfg.snr_db) : json(nullptr)},
            {"noise_placement", "post-convolution"},
            {"direct_path", "RIR absolute peak"},
            {"rir_split_counts", counts},
            {"skipped_rirs", skipped},
            {"config", cfg.ToJson()}};
  m.entries = std::move(entries);
  m.root = out_dir;
  m.Validate();
  return m;
}

std::vector<AnnotationRow> ReadAnnotations(const fs::path& path) {
  CsvTable csv = ReadCsv(path);
  const std::string ctx = "annotation " + path.string();
  int c_frame = 0, c_class = 1, c_source = 2, c_dist = 3;
  bool headerless = false;
  if (!csv.header.empty()) {
    try {
      ParseDouble(csv.header[0], ctx);
      headerless = true;
    } catch (const InvalidInput&) {
    }
  }
  if (headerless) {
    csv.rows.insert(csv.rows.begin(), csv.header);
  } else if (!csv.header.empty()) {
    c_frame = csv.RequireColumn("frame_index", ctx);
    c_class = csv.RequireColumn("class_label", ctx);
    c_source = csv.RequireColumn("source_id", ctx);
    c_dist = csv.RequireColumn("distance_m", ctx);
  }
  std::vector<AnnotationRow> rows;
  for (const auto& r : csv.rows) {
    if (static_cast<int>(r.size()) <= std::max({c_frame, c_class, c_source, c_dist})) {
      throw InvalidInput(ctx + ": short row");
    }
    AnnotationRow a;
    a.frame = static_cast<Index>(ParseDouble(r[c_frame], ctx));
    a.class_label = r[c_class];
    a.source_id = r[c_source];
    a.distance_m = ParseDouble(r[c_dist], ctx);
    rows.push_back(a);
  }
  return rows;
}

std::vector<Excerpt> FindExcerpts(const std::vector<AnnotationRow>& rows, Index excerpt_frames,
                                  Index hop_frames, const std::string& speech_label) {
  if (excerpt_frames < 1 || hop_frames < 1) {
    throw InvalidInput("excerpt and hop lengths must be at least one frame");
  }
  std::map<Index, std::vector<const AnnotationRow*>> by_frame;
  Index last = -1;
  for (const AnnotationRow& r : rows) {
    by_frame[r.frame].push_back(&r);
    last = std::max(last, r.frame);
  }
  std::vector<Excerpt> out;
  for (Index start = 0; start + excerpt_frames <= last + 1; start += hop_frames) {
    Excerpt ex;
    ex.first_frame = start;
    ex.num_frames = excerpt_frames;
    double dist_sum = 0.0;
    bool ok = true;
    for (Index f = start; f < start + excerpt_frames && ok; ++f) {
      auto it = by_frame.find(f);
      if (it == by_frame.end() || it->second.size() != 1) {
        ok = false;
        break;
      }
      const AnnotationRow& r = *it->second.front();
      if (r.class_label != speech_label || !(r.distance_m > 0.0)) ok = false;
      if (f == start) ex.source_id = r.source_id;
      if (r.source_id != ex.source_id) ok = false;
      dist_sum += r.distance_m;
    }
    if (!ok) continue;
    ex.distance_m = dist_sum / static_cast<double>(excerpt_frames);
    out.push_back(ex);
  }
  return out;
}

DatasetManifest IngestRealRecordings(const RealConfig& cfg, const fs::path& out_dir) {
  if (!fs::is_directory(cfg.annotations_dir)) {
    throw InvalidInput("annotation directory '" + cfg.annotations_dir +
                       "' does not exist; expected <stem>.csv files with columns "
                       "frame_index,class_label,source_id,distance_m");
  }
  if (!fs::is_directory(cfg.audio_dir)) {
    throw InvalidInput("audio directory '" + cfg.audio_dir +
                       "' does not exist; expected <stem>.wav next to each annotation");
  }
  if (!(cfg.frame_s > 0.0) || !(cfg.excerpt_s > 0.0) || !(cfg.hop_s > 0.0)) {
    throw InvalidInput("frame_s, excerpt_s and hop_s must be positive");
  }
  const Index ex_frames = std::lround(cfg.excerpt_s / cfg.frame_s);
  const Index hop_frames = std::lround(cfg.hop_s / cfg.frame_s);
  const Index ex_samples = static_cast<Index>(std::llround(cfg.excerpt_s * kSampleRate));

  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(cfg.annotations_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
  }
  std::sort(csvs.begin(), csvs.end());

  fs::create_directories(out_dir / "audio");
  std::vector<DatasetEntry> entries;
  json missing = json::array();
  std::size_t rejected_windows = 0;
  for (const fs::path& csv : csvs) {
    const std::string stem = csv.stem().string();
    const fs::path audio = fs::path(cfg.audio_dir) / (stem + ".wav");
    if (!fs::exists(audio)) {
      std::cerr << "warning: no audio for annotation " << csv << "; skipped\n";
      missing.push_back(stem);
      continue;
    }
    const std::vector<Excerpt> excerpts =
        FindExcerpts(ReadAnnotations(csv), ex_frames, hop_frames, cfg.speech_label);
    if (excerpts.empty()) continue;
    const AudioClip clip = LoadClip(audio);
    for (std::size_t k = 0; k < excerpts.size(); ++k) {
      const Excerpt& ex = excerpts[k];
      const Index start =
          static_cast<Index>(std::llround(ex.first_frame * cfg.frame_s * kSampleRate));
      if (start + ex_samples > clip.size()) {
        ++rejected_windows;
        continue;
      }
      DatasetEntry e;
      e.id = "real-" + stem + "-" + std::to_string(k);
      e.clip_path = "audio/" + e.id + ".wav";
      AudioClip out;
      out.samples = clip.samples.segment(start, ex_samples);
      WriteWav(out_dir / e.clip_path, out);
      e.distance_m = ex.distance_m;
      e.room_id = stem;
      e.source_id = ex.source_id;
      e.scene = {{"recording", stem}, {"start_s", ex.first_frame * cfg.frame_s}};
      entries.push_back(std::move(e));
    }
  }
  const int n = static_cast<int>(entries.size());
  const std::vector<Split> splits = RatioAssignment(n, cfg.ratios, MixSeed(cfg.seed, 0x7ea1));
  for (int i = 0; i < n; ++i) {
    entries[i].split = splits[i];
    entries[i].seed = MixSeed(cfg.seed, static_cast<std::uint64_t>(i));
  }
  if (n == 0) std::cerr << "warning: no single-source excerpts found\n";

  DatasetManifest m;
  m.realism = Realism::kReal;
  m.config_hash = HexDigest(Fnv1a(cfg.ToJson().dump()));
  m.duration_s = static_cast<double>(ex_samples) / kSampleRate;
  m.info = {{"snr_db", nullptr},
            {"snr_note", "recorded noise; SNR unannotated"},
            {"num_excerpts", n},
            {"missing_audio", missing},
            {"windows_past_audio_end", rejected_windows},
            {"config", cfg.ToJson()}};
  m.entries = std::move(entries);
  m.root = out_dir;
  m.Validate();
  return m;
}

// ------------------------------------------------------------------ stats

json DatasetSummary::ToJson() const {
  json bins = json::array();
  for (std::size_t b = 0; b < bin_labels.size(); ++b) {
    bins.push_back({{"bin", bin_labels[b]}, {"count", bin_counts[b]}});
  }
  json j = {{"bins", bins}, {"other", other_count}, {"split_sizes", split_sizes},
            {"num_with_rt60", num_with_rt60}};
  j["rt60_percentiles_s"] =
      rt60_percentiles ? json({{"p10", (*rt60_percentiles)[0]},
                               {"p50", (*rt60_percentiles)[1]},
                               {"p90", (*rt60_percentiles)[2]}})
                       : json(nullptr);
  return j;
}

std::string DatasetSummary::ToText() const {
  std::ostringstream os;
  os << "distance histogram\n";
  for (std::size_t b = 0; b < bin_labels.size(); ++b) {
    os << "  " << std::left << std::setw(12) << bin_labels[b] << bin_counts[b] << "\n";
  }
  os << "  " << std::left << std::setw(12) << "other" << other_count << "\n";
  os << "splits";
  for (const auto& [k, v] : split_sizes) os << "  " << k << "=" << v;
  os << "\n";
  if (rt60_percentiles) {
    os << std::fixed << std::setprecision(3) << "rt60 p10/p50/p90 (s)  "
       << (*rt60_percentiles)[0] << " / " << (*rt60_percentiles)[1] << " / "
       << (*rt60_percentiles)[2] << "  over " << num_with_rt60 << " clips\n";
  } else {
    os << "rt60 not annotated\n";
  }
  return os.str();
}

DatasetSummary DatasetStats(const DatasetManifest& manifest, const BinSpec& bins) {
  DatasetSummary s;
  for (int b = 0; b < bins.size(); ++b) s.bin_labels.push_back(bins.Label(b));
  s.bin_counts.assign(bins.size(), 0);
  std::vector<double> rt;
  for (const DatasetEntry& e : manifest.entries) {
    const int b = bins.Find(e.distance_m);
    if (b >= 0) {
      ++s.bin_counts[b];
    } else {
      ++s.other_count;
    }
    if (e.rt60_s && std::isfinite(*e.rt60_s)) rt.push_back(*e.rt60_s);
  }
  s.num_with_rt60 = rt.size();
  if (!rt.empty()) {
    s.rt60_percentiles = std::array<double, 3>{Percentile(rt, 10), Percentile(rt, 50),
                                               Percentile(rt, 90)};
  }
  s.split_sizes = manifest.SplitSizes();
  if (manifest.num_folds > 0) s.split_sizes["folds"] = manifest.num_folds;
  return s;
}

}  // namespace sde
