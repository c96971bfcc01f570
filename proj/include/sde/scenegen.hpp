// sde/scenegen.hpp

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

// Distance-annotated dataset builders at three realism levels (simulated
// RIRs, measured RIRs, annotated recordings), noise mixing, and the
// JSON-lines manifest that ties clips to labels and splits.

#ifndef SDE_SCENEGEN_HPP_
#define SDE_SCENEGEN_HPP_

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sde/audio.hpp"
#include "sde/roomsim.hpp"
#include "sde/stats.hpp"

namespace sde {

namespace fs = std::filesystem;

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr double kPeakLevel = 0.9;

enum class Realism { kSynthetic, kHybrid, kReal };
enum class Split { kTrain, kVal, kTest };

std::string ToString(Realism r);
Realism RealismFromString(const std::string& s);
std::string ToString(Split s);
Split SplitFromString(const std::string& s);

struct DatasetEntry {
  std::string id;
  std::string clip_path;  // relative to the manifest's directory
  double distance_m = 0.0;
  // Exactly one of these is set: a fixed split, or the k-fold group whose
  // test fold holds this entry.
  std::optional<Split> split;
  int fold = -1;
  std::optional<double> snr_db;
  std::optional<double> rt60_s;
  std::optional<double> drr_db;
  std::string room_id;
  std::string source_id;
  std::uint64_t seed = 0;
  nlohmann::json scene;  // geometry and simulator flags when known

  nlohmann::json ToJson() const;
  static DatasetEntry FromJson(const nlohmann::json& j);
};

struct DatasetManifest {
  Realism realism = Realism::kSynthetic;
  std::string config_hash;
  int num_folds = 0;       // 0: fixed train/val/test split
  double duration_s = 0.0;
  nlohmann::json info = nlohmann::json::object();
  std::vector<DatasetEntry> entries;
  fs::path root;  // directory clip paths resolve against; not serialized

  // Unique paths and ids, positive distances, one split assignment each,
  // snr_db consistent with the build.
  void Validate() const;
  fs::path ClipPath(const DatasetEntry& e) const { return root / e.clip_path; }
  // Entries in `split`. For k-fold manifests fold k tests group k,
  // validates on group (k + 1) % K and trains on the rest.
  std::vector<const DatasetEntry*> Select(Split split, int fold = 0) const;
  std::map<std::string, std::size_t> SplitSizes(int fold = 0) const;
};

// First line: header object with schema/version/realism/hash; then one
// entry per line. Deterministic byte output for identical content.
std::string ManifestToJsonl(const DatasetManifest& m);
DatasetManifest ManifestFromJsonl(const std::string& text);
void WriteManifest(const fs::path& path, const DatasetManifest& m);
DatasetManifest ReadManifest(const fs::path& path);

// Full linear convolution trimmed or zero-padded to `target_samples`
// (0 keeps dry + RIR - 1 samples). Rejects an all-zero dry clip.
AudioClip ConvolveScene(const AudioClip& dry, const Rir& rir, Index target_samples = 0);

// Noise gain that puts `p_noise` at `snr_db` below `p_clean`.
double NoiseGain(double p_clean, double p_noise, double snr_db);

// Adds a random same-length segment of `noise` scaled to `snr_db` (full-
// signal mean powers). snr_db = +inf returns `clean` unchanged.
AudioClip MixNoise(const AudioClip& clean, const AudioClip& noise, double snr_db,
                   std::uint64_t seed);

// Scales so the absolute peak equals `peak`. Rejects silent input.
void PeakNormalize(Eigen::VectorXd& x, double peak = kPeakLevel);

// Speech-like excitation: glottal pulse train through random formant
// resonators, grouped into syllables separated by pauses. `voice` fixes
// the speaker (pitch range, vocal-tract scale); `seed` the utterance.
AudioClip SpeechLikeExcitation(std::uint64_t seed, double duration_s, int voice = 0);

// Pink (1/f) Gaussian noise, unit variance.
AudioClip PinkNoise(std::uint64_t seed, double duration_s);

// Dry speech source: a directory of WAVs or the bundled generator.
class SpeechCorpus {
 public:
  // Recursive listing of *.wav, sorted. Throws InvalidInput naming the
  // expected layout when the directory is missing or holds no WAVs.
  static SpeechCorpus FromDirectory(const fs::path& dir);
  static SpeechCorpus Generated(int num_voices = 24);

  bool generated() const { return files_.empty(); }
  std::size_t size() const { return generated() ? num_voices_ : files_.size(); }
  // A clip of exactly `samples` samples: a random excerpt of a random file
  // (zero-padded if short), or a fresh generated utterance.
  AudioClip Draw(std::uint64_t seed, Index samples) const;

 private:
  std::vector<fs::path> files_;
  int num_voices_ = 0;
};

// Additive-noise source: a directory of WAVs or generated pink noise.
class NoiseCorpus {
 public:
  static NoiseCorpus FromDirectory(const fs::path& dir);
  static NoiseCorpus Generated() { return NoiseCorpus(); }

  // A noise clip at least `samples` long.
  AudioClip Draw(std::uint64_t seed, Index samples) const;

 private:
  std::vector<fs::path> files_;
};

struct SyntheticConfig {
  int num_scenes = 2500;
  int num_folds = 5;
  // When set (train, val, test), a fixed split replaces the folds.
  std::optional<std::array<int, 3>> split_counts;
  double duration_s = 10.0;
  double d_min = 1.0;
  double d_max = 14.0;
  std::string speech_dir;  // empty: bundled generator
  std::string noise_dir;   // empty: generated pink noise
  std::optional<double> snr_db;
  std::uint64_t seed = 0;
  std::string material_table;  // empty: shipped table
  SceneSamplingOptions sampling;
  RirOptions rir;
  bool write_rirs = true;

  nlohmann::json ToJson() const;
  // Unknown keys are rejected.
  static SyntheticConfig FromJson(const nlohmann::json& j);
};

struct HybridConfig {
  std::string rir_csv;  // columns rir_path, distance_m, room_id
  std::string speech_dir;
  std::string noise_dir;
  std::optional<double> snr_db;
  int clips_per_rir = 5;
  double duration_s = 10.0;
  std::array<double, 3> ratios{0.7, 0.1, 0.2};
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const;
  // Unknown keys are rejected.
  static HybridConfig FromJson(const nlohmann::json& j);
};

// One annotation row: frame_index at frame_s resolution.
struct AnnotationRow {
  Index frame = 0;
  std::string class_label;
  std::string source_id;
  double distance_m = 0.0;
};

struct Excerpt {
  Index first_frame = 0;
  Index num_frames = 0;
  std::string source_id;
  double distance_m = 0.0;
};

// Windows of `excerpt_frames` starting every `hop_frames` frames in which
// every frame has exactly one active row, of class `speech_label`, from one
// source_id throughout.
std::vector<Excerpt> FindExcerpts(const std::vector<AnnotationRow>& rows, Index excerpt_frames,
                                  Index hop_frames, const std::string& speech_label);

std::vector<AnnotationRow> ReadAnnotations(const fs::path& csv);

struct RealConfig {
  std::string annotations_dir;  // <stem>.csv per recording
  std::string audio_dir;        // <stem>.wav per recording
  double excerpt_s = 2.0;
  double hop_s = 2.0;
  double frame_s = 0.1;
  std::string speech_label = "speech";
  std::array<double, 3> ratios{0.7, 0.1, 0.2};
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const;
  // Unknown keys are rejected.
  static RealConfig FromJson(const nlohmann::json& j);
};

// Builders write audio under out_dir and return the manifest; the caller
// writes it (see WriteManifest).
DatasetManifest BuildSyntheticDataset(const SyntheticConfig& config, const fs::path& out_dir);
DatasetManifest BuildHybridDataset(const HybridConfig& config, const fs::path& out_dir);
DatasetManifest IngestRealRecordings(const RealConfig& config, const fs::path& out_dir);

// Split counts for n items under (train, val, test) ratios: val and test
// are rounded, train takes the rest.
std::array<int, 3> RatioSplitCounts(int n, const std::array<double, 3>& ratios);

struct DatasetSummary {
  std::vector<std::string> bin_labels;
  std::vector<std::size_t> bin_counts;
  std::size_t other_count = 0;  // distances outside every bin
  std::size_t num_with_rt60 = 0;
  std::optional<std::array<double, 3>> rt60_percentiles;  // 10th, 50th, 90th
  std::map<std::string, std::size_t> split_sizes;

  nlohmann::json ToJson() const;
  std::string ToText() const;
};

DatasetSummary DatasetStats(const DatasetManifest& manifest, const BinSpec& bins);

}  // namespace sde

#endif  // SDE_SCENEGEN_HPP_
