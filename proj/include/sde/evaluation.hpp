// sde/evaluation.hpp

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


// Distance-error metrics, binned reports with confidence intervals, table
// rendering, prediction dumps and the experiment drivers built on them
// (noise sweeps, ablation grids, cross-corpus matrices, DRR curves).

#ifndef SDE_EVALUATION_HPP_
#define SDE_EVALUATION_HPP_

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sde/model.hpp"
#include "sde/stats.hpp"
#include "sde/training.hpp"

namespace sde {

// |y - yhat|.
double L1(double y, double yhat);
// |y - yhat| / y. Throws InvalidInput unless y > 0.
double RL1(double y, double yhat);

struct PredictionRecord {
  std::string id;
  double y = 0.0;
  double yhat = 0.0;
  int fold = -1;
  std::optional<double> snr_db;
  std::optional<double> drr_db;
  std::optional<double> rt60_s;
  std::string framewise_path;  // optional per-frame dump, relative to the dump
};

// JSON lines, one record per line; non-finite numbers as strings.
void WritePredictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& r);
std::vector<PredictionRecord> ReadPredictions(const std::filesystem::path& path);

enum class CiMode { kPerFold, kPerSample };
std::string ToString(CiMode m);
CiMode CiModeFromString(const std::string& s);

struct MetricStat {
  double mean = 0.0;
  double ci_half = 0.0;  // 95% half-width

  bool operator==(const MetricStat&) const = default;
};

// One report column. Empty bins carry no metrics (absent, not zero).
struct BinStats {
  std::string label;
  std::size_t count = 0;
  std::optional<MetricStat> l1, rl1;
  bool degenerate_ci = false;  // one fold or one sample: width 0

  bool operator==(const BinStats&) const = default;
};

struct EvalReport {
  CiMode ci_mode = CiMode::kPerSample;
  BinStats average;            // every sample, in a bin or not
  std::vector<BinStats> bins;  // one per BinSpec interval
  BinStats other;              // samples outside every bin

  bool operator==(const EvalReport&) const = default;
};

// per_fold: t-interval over the fold means of each bin (records need
// folds); per_sample: normal interval over the sample errors.
EvalReport BinnedReport(const std::vector<PredictionRecord>& records, const BinSpec& bins,
                        CiMode mode);

// Rows of reports keyed by free-form string columns (SNR, config, ...).
struct ReportRow {
  std::vector<std::string> keys;
  std::optional<EvalReport> report;  // absent: missing pairing or failure
  std::string error;                 // non-empty for failed runs

  bool operator==(const ReportRow&) const = default;
};

struct ReportTable {
  std::vector<std::string> key_names;
  std::vector<std::string> bin_labels;
  std::vector<ReportRow> rows;

  bool operator==(const ReportTable&) const = default;
};

// CSV: key columns, ci, error, then per column group (average, bins,
// other) n, l1, l1_ci, rl1, rl1_ci, degenerate.
std::string RenderCsv(const ReportTable& t);
ReportTable ParseReportCsv(const std::string& text);
// Aligned text: one line per row, columns separated by two or more spaces,
// cells "L1+-ci | rL1+-ci | n=N".
std::string RenderText(const ReportTable& t);
ReportTable ParseReportText(const std::string& text);

// Plot data: x, y, count per point.
struct CurvePoint {
  double lo = 0.0, hi = 0.0;
  double mean_l1 = 0.0;
  std::size_t count = 0;
};

// Columns x (bin center), y (mean L1), count, lo, hi.
std::string CurveCsv(const std::vector<CurvePoint>& curve);

// Mean L1 over `width`-wide bins of a key, bins aligned to multiples of
// the width. Empty bins are left out.
std::vector<CurvePoint> StratifiedErrors(const std::vector<std::pair<double, double>>& key_l1,
                                         double width);
// L1 against true distance.
std::vector<CurvePoint> DistanceCurve(const std::vector<PredictionRecord>& r, double width = 1.0);
// L1 against DRR; records without a finite DRR are skipped. Throws
// InvalidInput when none has one.
std::vector<CurvePoint> DrrStratifiedErrors(const std::vector<PredictionRecord>& r,
                                            double bin_width_db = 2.0);

// Inference over a set, metadata copied from its manifest entries. A
// negative fold takes each entry's own fold.
std::vector<PredictionRecord> PredictRecords(const Model<float>& m, const LabeledSet& set,
                                             int fold = -1,
                                             std::vector<std::vector<double>>* framewise = nullptr);

// Predicts the mean training distance for every test item.
std::vector<PredictionRecord> MeanPredictorRecords(const LabeledSet& train, const LabeledSet& test);

// Kernel shape x recurrent depth around `base`.
std::vector<ModelConfig> ArchitectureGrid(const ModelConfig& base);
// none, spectrogram_only, all_channels around `base`.
std::vector<ModelConfig> AttentionGrid(const ModelConfig& base);
// all, magnitude_only, phase_only around `base`.
std::vector<ModelConfig> FeatureGrid(const ModelConfig& base);

struct ExperimentData {
  DatasetManifest manifest;
  int fold = 0;
  std::filesystem::path cache_dir;  // empty: <manifest root>/features
};

// Trains and tests every config under identical seeds and splits. A failed
// run, an invalid config included, becomes an error row and the grid
// continues. Key columns: kernel,
// recurrent, attention, features, params, then the parameter breakdown.
ReportTable AblationGrid(const std::vector<ModelConfig>& grid, const ExperimentData& data,
                         const TrainConfig& train_cfg, const BinSpec& bins,
                         const std::filesystem::path& out_dir);

struct Corpus {
  std::string name;
  ExperimentData data;
  BinSpec bins;
  std::filesystem::path checkpoint;  // trained in-corpus
};

struct CrossCorpusResult {
  std::vector<std::string> names;
  // l1[i][j]: model of corpus i on the test split of corpus j; NaN on failure.
  std::vector<std::vector<double>> l1;
  std::vector<EvalReport> in_corpus;  // diagonal reports
  std::vector<std::string> errors;
};

// Every checkpoint must share the feature extraction and channel subset.
// Off-diagonal cells fine-tune from the source checkpoint on the target
// training split when `finetune` is set; the diagonal is always the
// in-corpus evaluation.
CrossCorpusResult CrossCorpusMatrix(const std::vector<Corpus>& corpora, bool finetune,
                                    const TrainConfig& finetune_cfg,
                                    const std::filesystem::path& out_dir);
std::string RenderMatrixCsv(const CrossCorpusResult& r);
std::string RenderMatrixText(const CrossCorpusResult& r);

struct SweepCell {
  double snr_db = 0.0;
  std::string feature_set;
  std::filesystem::path checkpoint;  // empty or missing: absent cell
  std::filesystem::path manifest;
  int fold = 0;
};

// One report per (SNR, feature set). Each live cell's predictions are
// dumped to <out_dir>/<snr>_<features>.jsonl.
ReportTable SnrSweep(const std::vector<SweepCell>& cells, const BinSpec& bins, CiMode mode,
                     const std::filesystem::path& out_dir);

}  // namespace sde

#endif  // SDE_EVALUATION_HPP_
