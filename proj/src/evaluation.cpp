// src/evaluation.cpp

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


#include "sde/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

#include "sde/csv.hpp"
#include "sde/parallel.hpp"

namespace sde {

using nlohmann::json;

namespace {

void WriteFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot write " + path.string());
  os << text;
  if (!os) throw InvalidInput("failed writing " + path.string());
}

json NumberJson(double v) {
  if (std::isfinite(v)) return v;
  return FormatDouble(v);
}

double NumberFromJson(const json& j, const std::string& context) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return ParseDouble(j.get<std::string>(), context);
  throw InvalidInput(context + ": expected a number");
}

// Collapses whitespace runs so a message fits one aligned-text cell.
std::string OneLine(const std::string& s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

struct GroupAcc {
  std::vector<double> l1, rl1;
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_fold;
};

MetricStat Summarize(const std::vector<double>& v,
                     const std::vector<double>& fold_means, CiMode mode, bool* degenerate) {
  MetricStat s;
  s.mean = Mean(v);
  if (mode == CiMode::kPerSample) {
    *degenerate = v.size() < 2;
    if (!*degenerate) {
      s.ci_half = NormalQuantile(0.975) * StdDev(v) / std::sqrt(static_cast<double>(v.size()));
    }
  } else {
    *degenerate = fold_means.size() < 2;
    if (!*degenerate) {
      const int k = static_cast<int>(fold_means.size());
      s.ci_half = StudentTQuantile(0.975, k - 1) * StdDev(fold_means) / std::sqrt(static_cast<double>(k));
    }
  }
  return s;
}

BinStats Finish(const std::string& label, const GroupAcc& g, CiMode mode) {
  BinStats b;
  b.label = label;
  b.count = g.l1.size();
  if (b.count == 0) return b;
  std::vector<double> fold_l1, fold_rl1;
  for (const auto& [fold, v] : g.by_fold) {
    fold_l1.push_back(Mean(v.first));
    fold_rl1.push_back(Mean(v.second));
  }
  bool deg = false;
  b.l1 = Summarize(g.l1, fold_l1, mode, &deg);
  b.rl1 = Summarize(g.rl1, fold_rl1, mode, &deg);
  b.degenerate_ci = deg;
  return b;
}

std::vector<const BinStats*> Groups(const EvalReport& r) {
  std::vector<const BinStats*> g{&r.average};
  for (const auto& b : r.bins) g.push_back(&b);
  g.push_back(&r.other);
  return g;
}

std::vector<BinStats*> Groups(EvalReport& r) {
  std::vector<BinStats*> g{&r.average};
  for (auto& b : r.bins) g.push_back(&b);
  g.push_back(&r.other);
  return g;
}

std::vector<std::string> GroupLabels(const ReportTable& t) {
  std::vector<std::string> g{"average"};
  g.insert(g.end(), t.bin_labels.begin(), t.bin_labels.end());
  g.push_back("other");
  return g;
}

EvalReport EmptyReport(const std::vector<std::string>& bin_labels, CiMode mode) {
  EvalReport r;
  r.ci_mode = mode;
  r.average.label = "average";
  r.other.label = "other";
  for (const auto& l : bin_labels) {
    r.bins.emplace_back();
    r.bins.back().label = l;
  }
  return r;
}

std::string FormatCell(const BinStats& b) {
  if (b.count == 0) return "n=0";
  std::string s = "L1 " + FormatDouble(b.l1->mean) + "+-" + FormatDouble(b.l1->ci_half) +
                  " | rL1 " + FormatDouble(b.rl1->mean) + "+-" + FormatDouble(b.rl1->ci_half) +
                  " | n=" + std::to_string(b.count);
  if (b.degenerate_ci) s += " (degenerate CI)";
  return s;
}

BinStats ParseCell(const std::string& label, const std::string& cell) {
  BinStats b;
  b.label = label;
  if (cell == "n=0") return b;
  static const std::regex re(
      R"(L1 (\S+)\+-(\S+) \| rL1 (\S+)\+-(\S+) \| n=(\d+)( \(degenerate CI\))?)");
  std::smatch m;
  if (!std::regex_match(cell, m, re)) throw InvalidInput("malformed report cell '" + cell + "'");
  b.l1 = MetricStat{ParseDouble(m[1], "L1"), ParseDouble(m[2], "L1 CI")};
  b.rl1 = MetricStat{ParseDouble(m[3], "rL1"), ParseDouble(m[4], "rL1 CI")};
  b.count = std::stoul(m[5]);
  b.degenerate_ci = m[6].matched;
  return b;
}

std::string CheckCell(const std::string& s) {
  if (s.empty()) return "-";
  if (s.find("  ") != std::string::npos || s.find('\n') != std::string::npos ||
      s.front() == ' ' || s.back() == ' ') {
    throw InvalidInput("text table cell '" + s + "' has a line break or double space");
  }
  return s;
}

std::filesystem::path CacheDir(const ExperimentData& d) {
  return d.cache_dir.empty() ? d.manifest.root / "features" : d.cache_dir;
}

}  // namespace

// ---------------------------------------------------------------- metrics

double L1(double y, double yhat) { return std::abs(y - yhat); }

double RL1(double y, double yhat) {
  if (!(y > 0.0)) throw InvalidInput("relative error needs a positive true distance, got " + FormatDouble(y));
  return std::abs(y - yhat) / y;
}

std::string ToString(CiMode m) { return m == CiMode::kPerFold ? "per_fold" : "per_sample"; }

CiMode CiModeFromString(const std::string& s) {
  if (s == "per_fold") return CiMode::kPerFold;
  if (s == "per_sample") return CiMode::kPerSample;
  throw InvalidInput("unknown CI mode '" + s + "' (per_fold, per_sample)");
}

// ---------------------------------------------------------- prediction io

void WritePredictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& r) {
  std::string text;
  for (const auto& p : r) {
    json j = {{"id", p.id}, {"y", NumberJson(p.y)}, {"yhat", NumberJson(p.yhat)}, {"fold", p.fold}};
    if (p.snr_db) j["snr_db"] = NumberJson(*p.snr_db);
    if (p.drr_db) j["drr_db"] = NumberJson(*p.drr_db);
    if (p.rt60_s) j["rt60_s"] = NumberJson(*p.rt60_s);
    if (!p.framewise_path.empty()) j["framewise_path"] = p.framewise_path;
    text += j.dump() + "\n";
  }
  WriteFile(path, text);
}

std::vector<PredictionRecord> ReadPredictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot read predictions " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string ctx = path.string() + ":" + std::to_string(n);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InvalidInput(ctx + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("y") || !j.contains("yhat")) {
      throw InvalidInput(ctx + ": record needs id, y and yhat");
    }
    PredictionRecord p;
    p.id = j["id"].get<std::string>();
    p.y = NumberFromJson(j["y"], ctx);
    p.yhat = NumberFromJson(j["yhat"], ctx);
    p.fold = j.value("fold", -1);
    if (j.contains("snr_db")) p.snr_db = NumberFromJson(j["snr_db"], ctx);
    if (j.contains("drr_db")) p.drr_db = NumberFromJson(j["drr_db"], ctx);
    if (j.contains("rt60_s")) p.rt60_s = NumberFromJson(j["rt60_s"], ctx);
    p.framewise_path = j.value("framewise_path", "");
    out.push_back(std::move(p));
  }
  return out;
}

// ----------------------------------------------------------------- report

EvalReport BinnedReport(const std::vector<PredictionRecord>& records, const BinSpec& bins,
                        CiMode mode) {
  bins.Validate();
  std::vector<GroupAcc> acc(bins.size() + 2);  // average, bins, other
  for (const auto& r : records) {
    if (mode == CiMode::kPerFold && r.fold < 0) {
      throw InvalidInput("per_fold intervals need a fold id on every record (" + r.id + ")");
    }
    const double l1 = L1(r.y, r.yhat);
    const double rl1 = RL1(r.y, r.yhat);
    const int bin = bins.Find(r.y);
    for (std::size_t g : {std::size_t{0}, bin < 0 ? acc.size() - 1 : std::size_t(bin) + 1}) {
      acc[g].l1.push_back(l1);
      acc[g].rl1.push_back(rl1);
      auto& f = acc[g].by_fold[r.fold];
      f.first.push_back(l1);
      f.second.push_back(rl1);
    }
  }
  EvalReport rep;
  rep.ci_mode = mode;
  rep.average = Finish("average", acc.front(), mode);
  for (int b = 0; b < bins.size(); ++b) rep.bins.push_back(Finish(bins.Label(b), acc[b + 1], mode));
  rep.other = Finish("other", acc.back(), mode);
  return rep;
}

// ------------------------------------------------------------------ tables

std::string RenderCsv(const ReportTable& t) {
  CsvTable c;
  c.header = t.key_names;
  c.header.push_back("ci");
  c.header.push_back("error");
  const auto groups = GroupLabels(t);
  for (const auto& g : groups) {
    for (const char* f : {":n", ":l1", ":l1_ci", ":rl1", ":rl1_ci", ":degenerate"}) c.header.push_back(g + f);
  }
  for (const auto& row : t.rows) {
    if (row.keys.size() != t.key_names.size()) throw InvalidInput("report row has the wrong key count");
    std::vector<std::string> out = row.keys;
    out.push_back(row.report ? ToString(row.report->ci_mode) : "");
    out.push_back(row.error);
    if (row.report) {
      const auto g = Groups(*row.report);
      if (g.size() != groups.size()) throw InvalidInput("report bins differ from the table bins");
      for (const BinStats* b : g) {
        out.push_back(std::to_string(b->count));
        out.push_back(b->l1 ? FormatDouble(b->l1->mean) : "");
        out.push_back(b->l1 ? FormatDouble(b->l1->ci_half) : "");
        out.push_back(b->rl1 ? FormatDouble(b->rl1->mean) : "");
        out.push_back(b->rl1 ? FormatDouble(b->rl1->ci_half) : "");
        out.push_back(b->degenerate_ci ? "1" : "0");
      }
    } else {
      out.resize(c.header.size());
    }
    c.rows.push_back(std::move(out));
  }
  return FormatCsv(c);
}

ReportTable ParseReportCsv(const std::string& text) {
  const CsvTable c = ParseCsv(text);
  const int ci = c.RequireColumn("ci", "report table");
  const int err = c.RequireColumn("error", "report table");
  ReportTable t;
  t.key_names.assign(c.header.begin(), c.header.begin() + ci);
  const std::size_t first = err + 1;
  if ((c.header.size() - first) % 6 != 0 || c.header.size() - first < 12) {
    throw InvalidInput("report table has a malformed column layout");
  }
  const std::size_t ngroups = (c.header.size() - first) / 6;
  for (std::size_t g = 1; g + 1 < ngroups; ++g) {
    const std::string& h = c.header[first + 6 * g];
    t.bin_labels.push_back(h.substr(0, h.rfind(':')));
  }
  for (const auto& r : c.rows) {
    ReportRow row;
    row.keys.assign(r.begin(), r.begin() + ci);
    row.error = r[err];
    if (!r[ci].empty()) {
      EvalReport rep = EmptyReport(t.bin_labels, CiModeFromString(r[ci]));
      auto groups = Groups(rep);
      for (std::size_t g = 0; g < ngroups; ++g) {
        const auto* f = &r[first + 6 * g];
        BinStats& b = *groups[g];
        b.count = std::stoul(f[0]);
        if (!f[1].empty()) b.l1 = MetricStat{ParseDouble(f[1], "l1"), ParseDouble(f[2], "l1_ci")};
        if (!f[3].empty()) b.rl1 = MetricStat{ParseDouble(f[3], "rl1"), ParseDouble(f[4], "rl1_ci")};
        b.degenerate_ci = f[5] == "1";
      }
      row.report = std::move(rep);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string RenderText(const ReportTable& t) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header;
  for (const auto& k : t.key_names) header.push_back(CheckCell(k));
  header.push_back("ci");
  const auto groups = GroupLabels(t);
  for (const auto& g : groups) header.push_back(CheckCell(g));
  cells.push_back(header);
  for (const auto& row : t.rows) {
    if (row.keys.size() != t.key_names.size()) throw InvalidInput("report row has the wrong key count");
    std::vector<std::string> line;
    for (const auto& k : row.keys) line.push_back(CheckCell(k));
    if (!row.error.empty()) {
      line.push_back(CheckCell("error: " + row.error));
    } else {
      line.push_back(row.report ? ToString(row.report->ci_mode) : "absent");
    }
    if (row.report) {
      const auto g = Groups(*row.report);
      if (g.size() != groups.size()) throw InvalidInput("report bins differ from the table bins");
      for (const BinStats* b : g) line.push_back(FormatCell(*b));
    } else {
      line.resize(header.size(), "-");
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (const auto& line : cells) {
    std::string s;
    for (std::size_t i = 0; i < line.size(); ++i) {
      s += line[i];
      if (i + 1 < line.size()) s += std::string(width[i] - line[i].size() + 2, ' ');
    }
    out += s + "\n";
  }
  return out;
}

ReportTable ParseReportText(const std::string& text) {
  static const std::regex sep(" {2,}");
  std::vector<std::vector<std::string>> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f(std::sregex_token_iterator(line.begin(), line.end(), sep, -1),
                               std::sregex_token_iterator());
    for (auto& s : f) {
      if (s == "-") s.clear();
    }
    lines.push_back(std::move(f));
  }
  if (lines.empty()) throw InvalidInput("report text is empty");
  const auto& header = lines[0];
  const auto ci = std::find(header.begin(), header.end(), "ci");
  if (ci == header.end() || header.end() - ci < 3) throw InvalidInput("report text has no ci column");
  ReportTable t;
  t.key_names.assign(header.begin(), ci);
  const std::size_t nk = t.key_names.size();
  t.bin_labels.assign(ci + 2, header.end() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& f = lines[i];
    if (f.size() != header.size()) {
      throw InvalidInput("report text line " + std::to_string(i + 1) + " has " +
                         std::to_string(f.size()) + " cells, expected " + std::to_string(header.size()));
    }
    ReportRow row;
    row.keys.assign(f.begin(), f.begin() + nk);
    const std::string& c = f[nk];
    if (c.rfind("error: ", 0) == 0) {
      row.error = c.substr(7);
    } else if (c != "absent") {
      EvalReport rep = EmptyReport(t.bin_labels, CiModeFromString(c));
      auto groups = Groups(rep);
      for (std::size_t g = 0; g < groups.size(); ++g) {
        *groups[g] = ParseCell(groups[g]->label, f[nk + 1 + g]);
      }
      row.report = std::move(rep);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ------------------------------------------------------------------ curves

std::string CurveCsv(const std::vector<CurvePoint>& curve) {
  CsvTable c;
  c.header = {"x", "y", "count", "lo", "hi"};
  for (const auto& p : curve) {
    c.rows.push_back({FormatDouble(0.5 * (p.lo + p.hi)), FormatDouble(p.mean_l1),
                      std::to_string(p.count), FormatDouble(p.lo), FormatDouble(p.hi)});
  }
  return FormatCsv(c);
}

std::vector<CurvePoint> StratifiedErrors(const std::vector<std::pair<double, double>>& key_l1,
                                         double width) {
  if (!(width > 0.0)) throw InvalidInput("bin width must be positive");
  std::map<long long, std::pair<double, std::size_t>> acc;
  for (const auto& [key, l1] : key_l1) {
    if (!std::isfinite(key)) throw InvalidInput("stratification key must be finite");
    auto& a = acc[static_cast<long long>(std::floor(key / width))];
    a.first += l1;
    a.second += 1;
  }
  std::vector<CurvePoint> out;
  for (const auto& [bin, a] : acc) {
    out.push_back({bin * width, (bin + 1) * width, a.first / a.second, a.second});
  }
  return out;
}

std::vector<CurvePoint> DistanceCurve(const std::vector<PredictionRecord>& r, double width) {
  std::vector<std::pair<double, double>> kv;
  for (const auto& p : r) kv.emplace_back(p.y, L1(p.y, p.yhat));
  return StratifiedErrors(kv, width);
}

std::vector<CurvePoint> DrrStratifiedErrors(const std::vector<PredictionRecord>& r,
                                            double bin_width_db) {
  std::vector<std::pair<double, double>> kv;
  for (const auto& p : r) {
    if (p.drr_db && std::isfinite(*p.drr_db)) kv.emplace_back(*p.drr_db, L1(p.y, p.yhat));
  }
  if (kv.empty()) throw InvalidInput("no prediction carries a finite DRR");
  return StratifiedErrors(kv, bin_width_db);
}

// -------------------------------------------------------------- inference

std::vector<PredictionRecord> PredictRecords(const Model<float>& m, const LabeledSet& set, int fold,
                                             std::vector<std::vector<double>>* framewise) {
  SetPredictions p = PredictSet(m, set);
  if (framewise) *framewise = std::move(p.framewise);
  std::vector<PredictionRecord> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    PredictionRecord& r = out[i];
    r.id = set.id(i);
    r.y = set.distance(i);
    r.yhat = p.utterance[i];
    r.fold = fold;
    if (const DatasetEntry* e = set.entry(i)) {
      if (fold < 0) r.fold = e->fold;
      r.snr_db = e->snr_db;
      r.drr_db = e->drr_db;
      r.rt60_s = e->rt60_s;
    }
  }
  return out;
}

std::vector<PredictionRecord> MeanPredictorRecords(const LabeledSet& train, const LabeledSet& test) {
  if (train.empty()) throw InvalidInput("mean predictor needs training labels");
  double sum = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) sum += train.distance(i);
  const double mean = sum / train.size();
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < test.size(); ++i) {
    PredictionRecord r;
    r.id = test.id(i);
    r.y = test.distance(i);
    r.yhat = mean;
    if (const DatasetEntry* e = test.entry(i)) {
      r.fold = e->fold;
      r.snr_db = e->snr_db;
      r.drr_db = e->drr_db;
      r.rt60_s = e->rt60_s;
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ------------------------------------------------------------------ grids

std::vector<ModelConfig> ArchitectureGrid(const ModelConfig& base) {
  std::vector<ModelConfig> g;
  for (KernelShape k : {KernelShape::kTime, KernelShape::kSquare, KernelShape::kFrequency}) {
    for (int layers : {0, 1, 2}) {
      ModelConfig c = base;
      c.kernel = k;
      c.recurrent_layers = layers;
      g.push_back(c);
    }
  }
  return g;
}

std::vector<ModelConfig> AttentionGrid(const ModelConfig& base) {
  std::vector<ModelConfig> g;
  for (AttentionMode a : {AttentionMode::kNone, AttentionMode::kSpectrogramOnly, AttentionMode::kAllChannels}) {
    ModelConfig c = base;
    c.attention = a;
    g.push_back(c);
  }
  return g;
}

std::vector<ModelConfig> FeatureGrid(const ModelConfig& base) {
  std::vector<ModelConfig> g;
  for (ChannelSubset s : {ChannelSubset::kAll, ChannelSubset::kMagnitudeOnly, ChannelSubset::kPhaseOnly}) {
    ModelConfig c = base;
    c.features = s;
    g.push_back(c);
  }
  return g;
}

ReportTable AblationGrid(const std::vector<ModelConfig>& grid, const ExperimentData& data,
                         const TrainConfig& train_cfg, const BinSpec& bins,
                         const std::filesystem::path& out_dir) {
  bins.Validate();
  ReportTable t;
  t.key_names = {"kernel",      "recurrent",   "attention",        "features", "params",
                 "params_attention", "params_conv", "params_recurrent", "params_heads"};
  for (int b = 0; b < bins.size(); ++b) t.bin_labels.push_back(bins.Label(b));
  t.rows.resize(grid.size());
  const std::filesystem::path cache = CacheDir(data);
  ParallelFor(static_cast<Index>(grid.size()), [&](Index i) {
    const ModelConfig& cfg = grid[i];
    ReportRow row;
    row.keys = {ToString(cfg.kernel), std::to_string(cfg.recurrent_layers),
                ToString(cfg.attention), ToString(cfg.features)};
    row.keys.resize(t.key_names.size());
    try {
      cfg.Validate();
      const ParameterCounts pc = CountParameters(cfg);
      row.keys[4] = std::to_string(pc.total());
      row.keys[5] = std::to_string(pc.attention);
      row.keys[6] = std::to_string(pc.conv);
      row.keys[7] = std::to_string(pc.recurrent);
      row.keys[8] = std::to_string(pc.heads);
      const LabeledSet train =
          LabeledSet::FromManifest(data.manifest, Split::kTrain, data.fold, cfg.features, cache);
      const LabeledSet val =
          LabeledSet::FromManifest(data.manifest, Split::kVal, data.fold, cfg.features, cache);
      const LabeledSet test =
          LabeledSet::FromManifest(data.manifest, Split::kTest, data.fold, cfg.features, cache);
      const std::filesystem::path dir = out_dir / ("row_" + std::to_string(i));
      const TrainResult r = Train(train, val, cfg, train_cfg, dir);
      const Checkpoint<float> ck = LoadCheckpoint<float>(r.best_checkpoint);
      const auto records = PredictRecords(ck.model, test, data.fold);
      WritePredictions(dir / "predictions.jsonl", records);
      row.report = BinnedReport(records, bins, CiMode::kPerSample);
    } catch (const std::exception& e) {
      row.error = OneLine(e.what());
      if (row.error.empty()) row.error = "failed";
    }
    t.rows[i] = std::move(row);
  }, std::min(WorkerCount(), static_cast<int>(std::max<std::size_t>(grid.size(), 1))));
  return t;
}

// ------------------------------------------------------------ cross corpus

CrossCorpusResult CrossCorpusMatrix(const std::vector<Corpus>& corpora, bool finetune,
                                    const TrainConfig& finetune_cfg,
                                    const std::filesystem::path& out_dir) {
  const std::size_t n = corpora.size();
  std::vector<Checkpoint<float>> ck;
  for (const auto& c : corpora) {
    c.bins.Validate();
    ck.push_back(LoadCheckpoint<float>(c.checkpoint));
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (ck[i].extraction_hash != ck[0].extraction_hash) {
      throw InvalidInput("corpora " + corpora[0].name + " and " + corpora[i].name +
                         " were trained under different feature extraction configs");
    }
    if (ck[i].model.cfg.features != ck[0].model.cfg.features) {
      throw InvalidInput("corpora " + corpora[0].name + " and " + corpora[i].name +
                         " use different feature channels");
    }
  }
  CrossCorpusResult res;
  for (const auto& c : corpora) res.names.push_back(c.name);
  res.l1.assign(n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
  res.in_corpus.resize(n);
  std::vector<std::string> errors(n * n);
  const ChannelSubset subset = n ? ck[0].model.cfg.features : ChannelSubset::kAll;
  ParallelFor(static_cast<Index>(n * n), [&](Index cell) {
    const std::size_t i = cell / n, j = cell % n;
    const Corpus& target = corpora[j];
    try {
      const std::filesystem::path cache = CacheDir(target.data);
      const LabeledSet test = LabeledSet::FromManifest(target.data.manifest, Split::kTest,
                                                       target.data.fold, subset, cache);
      std::vector<PredictionRecord> records;
      const std::filesystem::path dir = out_dir / (corpora[i].name + "_on_" + target.name);
      if (i != j && finetune) {
        const LabeledSet train = LabeledSet::FromManifest(target.data.manifest, Split::kTrain,
                                                          target.data.fold, subset, cache);
        const LabeledSet val = LabeledSet::FromManifest(target.data.manifest, Split::kVal,
                                                        target.data.fold, subset, cache);
        TrainConfig cfg = finetune_cfg;
        cfg.finetune_from = corpora[i].checkpoint.string();
        const TrainResult r = Train(train, val, ck[i].model.cfg, cfg, dir);
        records = PredictRecords(LoadCheckpoint<float>(r.best_checkpoint).model, test, target.data.fold);
      } else {
        if (ck[i].model.cfg.frames != test.frames()) {
          throw InvalidInput("model of " + corpora[i].name + " expects " +
                             std::to_string(ck[i].model.cfg.frames) + " frames, " + target.name +
                             " clips have " + std::to_string(test.frames()));
        }
        records = PredictRecords(ck[i].model, test, target.data.fold);
      }
      if (!out_dir.empty()) WritePredictions(dir / "predictions.jsonl", records);
      const EvalReport rep = BinnedReport(records, target.bins, CiMode::kPerSample);
      if (i == j) res.in_corpus[i] = rep;
      res.l1[i][j] = rep.average.l1 ? rep.average.l1->mean : std::numeric_limits<double>::quiet_NaN();
    } catch (const std::exception& e) {
      errors[cell] = corpora[i].name + " -> " + target.name + ": " + OneLine(e.what());
    }
  }, std::min(WorkerCount(), static_cast<int>(std::max<std::size_t>(n * n, 1))));
  for (auto& e : errors) {
    if (!e.empty()) res.errors.push_back(std::move(e));
  }
  return res;
}

std::string RenderMatrixCsv(const CrossCorpusResult& r) {
  CsvTable c;
  c.header = {"train \\ test"};
  c.header.insert(c.header.end(), r.names.begin(), r.names.end());
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    std::vector<std::string> row{r.names[i]};
    for (double v : r.l1[i]) row.push_back(std::isnan(v) ? "" : FormatDouble(v));
    c.rows.push_back(std::move(row));
  }
  return FormatCsv(c);
}

std::string RenderMatrixText(const CrossCorpusResult& r) {
  std::vector<std::vector<std::string>> cells{{"train \\ test"}};
  cells[0].insert(cells[0].end(), r.names.begin(), r.names.end());
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    std::vector<std::string> row{r.names[i]};
    for (double v : r.l1[i]) {
      std::ostringstream os;
      os.setf(std::ios::fixed);
      os.precision(3);
      if (std::isnan(v)) os << "-";
      else os << v;
      row.push_back(os.str());
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells) {
    for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], row[k].size());
  }
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      out += row[k];
      if (k + 1 < row.size()) out += std::string(width[k] - row[k].size() + 2, ' ');
    }
    out += "\n";
  }
  for (const auto& e : r.errors) out += "error: " + e + "\n";
  return out;
}

// --------------------------------------------------------------- SNR sweep

ReportTable SnrSweep(const std::vector<SweepCell>& cells, const BinSpec& bins, CiMode mode,
                     const std::filesystem::path& out_dir) {
  bins.Validate();
  ReportTable t;
  t.key_names = {"snr_db", "features"};
  for (int b = 0; b < bins.size(); ++b) t.bin_labels.push_back(bins.Label(b));
  t.rows.resize(cells.size());
  ParallelFor(static_cast<Index>(cells.size()), [&](Index i) {
    const SweepCell& cell = cells[i];
    ReportRow row;
    row.keys = {SnrKey(cell.snr_db), cell.feature_set};
    if (!cell.checkpoint.empty() && std::filesystem::exists(cell.checkpoint) &&
        !cell.manifest.empty() && std::filesystem::exists(cell.manifest)) {
      try {
        const Checkpoint<float> ck = LoadCheckpoint<float>(cell.checkpoint);
        const DatasetManifest m = ReadManifest(cell.manifest);
        const LabeledSet test = LabeledSet::FromManifest(m, Split::kTest, cell.fold,
                                                         ck.model.cfg.features, m.root / "features");
        const auto records = PredictRecords(ck.model, test, cell.fold);
        if (!out_dir.empty()) {
          const std::string stem = SnrKey(cell.snr_db) + "_" + cell.feature_set;
          WritePredictions(out_dir / (stem + ".jsonl"), records);
          WriteFile(out_dir / (stem + "_distance.csv"), CurveCsv(DistanceCurve(records)));
        }
        row.report = BinnedReport(records, bins, mode);
      } catch (const std::exception& e) {
        row.error = OneLine(e.what());
      }
    }
    t.rows[i] = std::move(row);
  }, std::min(WorkerCount(), static_cast<int>(std::max<std::size_t>(cells.size(), 1))));
  return t;
}

}  // namespace sde
