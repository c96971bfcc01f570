// tools/cli.cpp

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


#include "cli.hpp"

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sde/audio.hpp"
#include "sde/csv.hpp"
#include "sde/features.hpp"
#include "sde/parallel.hpp"
#include "sde/stats.hpp"

namespace sde::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json ConvertYaml(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Undefined:
    case YAML::NodeType::Null:
      return nullptr;
    case YAML::NodeType::Scalar: {
      const std::string& s = n.Scalar();
      if (n.Tag() == "!") return s;
      if (s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
      if (s == "true" || s == "True" || s == "TRUE") return true;
      if (s == "false" || s == "False" || s == "FALSE") return false;
      std::int64_t i = 0;
      const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
      if (ec == std::errc() && end == s.data() + s.size()) return i;
      double d = 0.0;
      if (YAML::convert<double>::decode(n, d)) return d;
      return s;
    }
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& e : n) a.push_back(ConvertYaml(e));
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : n) {
        const std::string key = kv.first.as<std::string>();
        if (o.contains(key)) throw InvalidInput("duplicate config key '" + key + "'");
        o[key] = ConvertYaml(kv.second);
      }
      return o;
    }
  }
  return nullptr;
}

double SnrFromJson(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "clean") return kInf;
    return ParseDouble(s, "snr_sweep");
  }
  throw InvalidInput("snr_sweep entries must be numbers or 'clean'");
}

BinSpec BinsFromJson(const json& v) {
  BinSpec b;
  if (v.is_string()) b = BinSpec::Parse(v.get<std::string>());
  else if (v.is_array()) b = BinSpec::FromCuts(v.get<std::vector<double>>());
  else throw InvalidInput("bins must be a string like \"[1,2),[2,4)\" or a list of cut points");
  b.Validate();
  return b;
}

std::string BinsText(const BinSpec& b) {
  std::string s;
  for (int i = 0; i < b.size(); ++i) s += (i ? "," : "") + b.Label(i);
  return s;
}

json CanonicalParams(Realism kind, const json& params) {
  switch (kind) {
    case Realism::kSynthetic: return SyntheticConfig::FromJson(params).ToJson();
    case Realism::kHybrid: return HybridConfig::FromJson(params).ToJson();
    case Realism::kReal: return RealConfig::FromJson(params).ToJson();
  }
  return params;
}

Realism RealismFromString(const std::string& s) {
  if (s == "synthetic") return Realism::kSynthetic;
  if (s == "hybrid") return Realism::kHybrid;
  if (s == "real") return Realism::kReal;
  throw InvalidInput("unknown dataset kind '" + s + "' (synthetic, hybrid, real)");
}

std::string RealismName(Realism r) {
  return r == Realism::kSynthetic ? "synthetic" : r == Realism::kHybrid ? "hybrid" : "real";
}

void WriteFile(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot write " + path.string());
  os << text;
}

std::string MatrixCsv(const Eigen::MatrixXd& m) {
  std::string s;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) s += ',';
      s += FormatDouble(m(r, c));
    }
    s += '\n';
  }
  return s;
}

// Merges this command's entry into <out>/run_summary.json.
void WriteSummary(const fs::path& out, const std::string& command, const std::string& hash,
                  const std::string& status, const json& details) {
  const fs::path path = out / "run_summary.json";
  json all = json::object();
  if (fs::exists(path)) {
    std::ifstream is(path);
    try {
      all = json::parse(is);
    } catch (const json::exception&) {
      all = json::object();
    }
  }
  all[command] = {{"config_hash", hash}, {"status", status}, {"details", details}};
  WriteFile(path, all.dump(2) + "\n");
}

void RequireFile(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw InvalidInput(what + " " + p.string() + " does not exist");
}

fs::path CacheDir(const DatasetManifest& m) { return m.root / "features"; }

// ---------------------------------------------------------------- commands

int CmdGenerate(const ExperimentConfig& cfg, std::ostream& out) {
  json details = json::array();
  if (!cfg.dataset.manifest.empty()) {
    RequireFile(cfg.dataset.manifest, "manifest");
    out << "dataset given by manifest " << cfg.dataset.manifest.string() << "; nothing to generate\n";
    return kExitOk;
  }
  std::vector<std::optional<double>> snrs;
  if (cfg.snr_sweep.empty()) snrs.push_back(std::nullopt);
  for (double s : cfg.snr_sweep) snrs.push_back(s);
  for (const auto& snr : snrs) {
    const json params = cfg.BuilderParams(snr);
    const std::string hash = HexDigest(Fnv1a(params.dump()));
    const fs::path path = cfg.ManifestPath(snr);
    if (fs::exists(path) && ReadManifest(path).config_hash == hash) {
      out << "up-to-date " << path.string() << "\n";
      details.push_back({{"manifest", path.string()}, {"status", "up-to-date"}});
      continue;
    }
    const fs::path dir = cfg.DatasetDir(snr);
    DatasetManifest m;
    switch (cfg.dataset.kind) {
      case Realism::kSynthetic: m = BuildSyntheticDataset(SyntheticConfig::FromJson(params), dir); break;
      case Realism::kHybrid: m = BuildHybridDataset(HybridConfig::FromJson(params), dir); break;
      case Realism::kReal: m = IngestRealRecordings(RealConfig::FromJson(params), dir); break;
    }
    WriteManifest(path, m);
    m.root = dir;
    out << "wrote " << m.entries.size() << " entries to " << path.string() << "\n"
        << DatasetStats(m, cfg.bins).ToText();
    details.push_back({{"manifest", path.string()}, {"status", "built"}, {"entries", m.entries.size()}});
  }
  WriteSummary(cfg.out, "generate", cfg.hash, "ok", details);
  return kExitOk;
}

DatasetManifest ReadRequiredManifest(const fs::path& p) {
  RequireFile(p, "manifest");
  return ReadManifest(p);
}

int CmdTrain(const ExperimentConfig& cfg, std::ostream& out) {
  json details = json::object();
  auto log = [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " train_loss " << FormatDouble(e.train_loss) << " val_mse "
        << FormatDouble(e.val_mse) << " val_l1 " << FormatDouble(e.val_l1) << " lr "
        << FormatDouble(e.lr) << "\n";
    out.flush();
  };
  if (!cfg.snr_sweep.empty()) {
    std::map<double, fs::path> manifests;
    for (double s : cfg.snr_sweep) manifests[s] = cfg.ManifestPath(s);
    const int fold = cfg.folds.empty() ? 0 : cfg.folds.front();
    for (const auto& fs_name : cfg.feature_sets) {
      ModelConfig mc = cfg.model;
      mc.features = ChannelSubsetFromString(fs_name);
      const FamilyResult fam = TrainSnrFamily(manifests, cfg.snr_sweep, mc, cfg.train, fold,
                                              cfg.FamilyDir(fs_name));
      out << fs_name << ": trained " << fam.checkpoints.size() << " models, skipped "
          << fam.skipped.size() << " SNRs without a dataset\n";
      details[fs_name] = {{"trained", fam.checkpoints.size()}, {"skipped", fam.skipped.size()}};
    }
  } else {
    const DatasetManifest m = ReadRequiredManifest(cfg.ManifestPath());
    for (int fold : cfg.ResolveFolds(m)) {
      const LabeledSet train = LabeledSet::FromManifest(m, Split::kTrain, fold, cfg.model.features, CacheDir(m));
      const LabeledSet val = LabeledSet::FromManifest(m, Split::kVal, fold, cfg.model.features, CacheDir(m));
      out << "fold " << fold << ": " << train.size() << " train, " << val.size() << " val\n";
      const TrainResult r = Train(train, val, cfg.model, cfg.train, cfg.FoldDir(fold), log);
      details["fold_" + std::to_string(fold)] = {{"best_epoch", r.best_epoch},
                                                 {"best_val_mse", r.best_val_mse},
                                                 {"checkpoint", r.best_checkpoint.string()}};
    }
  }
  WriteSummary(cfg.out, "train", cfg.hash, "ok", details);
  return kExitOk;
}

void WriteCurves(const fs::path& dir, const std::vector<PredictionRecord>& r) {
  WriteFile(dir / "curve_distance.csv", CurveCsv(DistanceCurve(r)));
  std::vector<std::pair<double, double>> snr;
  bool drr = false;
  for (const auto& p : r) {
    if (p.snr_db && std::isfinite(*p.snr_db)) snr.emplace_back(*p.snr_db, L1(p.y, p.yhat));
    drr = drr || (p.drr_db && std::isfinite(*p.drr_db));
  }
  if (drr) WriteFile(dir / "curve_drr.csv", CurveCsv(DrrStratifiedErrors(r)));
  if (!snr.empty()) WriteFile(dir / "curve_snr.csv", CurveCsv(StratifiedErrors(snr, 1.0)));
}

int CmdEvalSweep(const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.out / "eval";
  std::vector<SweepCell> cells;
  const int fold = cfg.folds.empty() ? 0 : cfg.folds.front();
  for (double s : cfg.snr_sweep) {
    for (const auto& f : cfg.feature_sets) {
      cells.push_back({s, f, cfg.FamilyDir(f) / ("snr_" + SnrKey(s)) / "best.ckpt", cfg.ManifestPath(s), fold});
    }
  }
  const ReportTable t = SnrSweep(cells, cfg.bins, cfg.ci.value_or(CiMode::kPerSample), dir / "sweep");
  WriteFile(dir / "sweep.csv", RenderCsv(t));
  WriteFile(dir / "sweep.txt", RenderText(t));
  // Error against SNR per feature set; the clean cell has no finite x.
  for (const auto& f : cfg.feature_sets) {
    std::vector<CurvePoint> curve;
    for (const auto& row : t.rows) {
      if (row.keys[1] != f || !row.report || !row.report->average.l1 || row.keys[0] == "clean") continue;
      const double x = ParseDouble(row.keys[0], "snr");
      curve.push_back({x, x, row.report->average.l1->mean, row.report->average.count});
    }
    WriteFile(dir / ("curve_snr_" + f + ".csv"), CurveCsv(curve));
  }
  out << RenderText(t);
  bool failed = false;
  for (const auto& row : t.rows) failed = failed || !row.error.empty();
  WriteSummary(cfg.out, "eval", cfg.hash, failed ? "partial" : "ok",
               {{"table", (dir / "sweep.csv").string()}, {"cells", t.rows.size()}});
  return failed ? kExitPartial : kExitOk;
}

int CmdEval(const ExperimentConfig& cfg, std::ostream& out) {
  if (!cfg.snr_sweep.empty()) return CmdEvalSweep(cfg, out);
  const DatasetManifest m = ReadRequiredManifest(cfg.ManifestPath());
  const fs::path dir = cfg.out / "eval";
  const std::vector<int> folds = cfg.ResolveFolds(m);
  std::vector<PredictionRecord> records, baseline;
  std::string fold_text;
  for (int fold : folds) {
    const fs::path ckpt = cfg.checkpoint.empty() ? cfg.FoldDir(fold) / "best.ckpt" : cfg.checkpoint;
    RequireFile(ckpt, "checkpoint");
    const Checkpoint<float> ck = LoadCheckpoint<float>(ckpt);
    const ChannelSubset subset = ck.model.cfg.features;
    const LabeledSet test = LabeledSet::FromManifest(m, Split::kTest, fold, subset, CacheDir(m));
    const LabeledSet train = LabeledSet::FromManifest(m, Split::kTrain, fold, subset, CacheDir(m));
    if (test.empty()) throw InvalidInput("fold " + std::to_string(fold) + " has no test items");
    std::vector<std::vector<double>> framewise;
    auto r = PredictRecords(ck.model, test, fold, cfg.dump_framewise ? &framewise : nullptr);
    if (cfg.dump_framewise) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        CsvTable t;
        t.header = {"frame", "yhat"};
        for (std::size_t k = 0; k < framewise[i].size(); ++k) {
          t.rows.push_back({std::to_string(k), FormatDouble(framewise[i][k])});
        }
        r[i].framewise_path = "framewise/" + r[i].id + ".csv";
        WriteFile(dir / r[i].framewise_path, FormatCsv(t));
      }
    }
    records.insert(records.end(), r.begin(), r.end());
    auto b = MeanPredictorRecords(train, test);
    for (auto& p : b) p.fold = fold;
    baseline.insert(baseline.end(), b.begin(), b.end());
    fold_text += (fold_text.empty() ? "" : ",") + std::to_string(fold);
  }
  const CiMode mode = cfg.ci.value_or(folds.size() > 1 ? CiMode::kPerFold : CiMode::kPerSample);
  ReportTable t;
  t.key_names = {"model", "folds"};
  for (int b = 0; b < cfg.bins.size(); ++b) t.bin_labels.push_back(cfg.bins.Label(b));
  t.rows.push_back({{"crnn", fold_text}, BinnedReport(records, cfg.bins, mode), ""});
  t.rows.push_back({{"mean_predictor", fold_text}, BinnedReport(baseline, cfg.bins, mode), ""});
  WritePredictions(dir / "predictions.jsonl", records);
  WritePredictions(dir / "baseline_predictions.jsonl", baseline);
  WriteFile(dir / "report.csv", RenderCsv(t));
  WriteFile(dir / "report.txt", RenderText(t));
  WriteCurves(dir, records);
  out << RenderText(t);
  WriteSummary(cfg.out, "eval", cfg.hash, "ok",
               {{"report", (dir / "report.csv").string()},
                {"predictions", (dir / "predictions.jsonl").string()},
                {"l1", t.rows[0].report->average.l1->mean},
                {"baseline_l1", t.rows[1].report->average.l1->mean},
                {"ci", ToString(mode)}});
  return kExitOk;
}

int CmdAblate(const ExperimentConfig& cfg, std::ostream& out) {
  if (cfg.grid.empty()) throw InvalidInput("ablate needs a grid in the config");
  ExperimentData data;
  data.manifest = ReadRequiredManifest(cfg.ManifestPath());
  data.fold = cfg.folds.empty() ? 0 : cfg.folds.front();
  const fs::path dir = cfg.out / "ablate";
  const ReportTable t = AblationGrid(cfg.grid, data, cfg.train, cfg.bins, dir);
  WriteFile(dir / "ablation.csv", RenderCsv(t));
  WriteFile(dir / "ablation.txt", RenderText(t));
  out << RenderText(t);
  std::size_t failed = 0;
  for (const auto& row : t.rows) failed += !row.error.empty();
  WriteSummary(cfg.out, "ablate", cfg.hash, failed ? "partial" : "ok",
               {{"table", (dir / "ablation.csv").string()}, {"rows", t.rows.size()}, {"failed", failed}});
  return failed ? kExitPartial : kExitOk;
}

int CmdCrossCorpus(const ExperimentConfig& cfg, bool finetune, std::ostream& out) {
  if (cfg.corpora.empty()) throw InvalidInput("crosscorpus needs a corpora list in the config");
  std::vector<Corpus> corpora;
  for (const auto& [name, path] : cfg.corpora) {
    const ExperimentConfig sub = ExperimentConfig::Load(path);
    Corpus c;
    c.name = name;
    c.data.manifest = ReadRequiredManifest(sub.ManifestPath());
    c.data.fold = sub.folds.empty() ? 0 : sub.folds.front();
    c.bins = sub.bins;
    c.checkpoint = sub.checkpoint.empty() ? sub.FoldDir(c.data.fold) / "best.ckpt" : sub.checkpoint;
    RequireFile(c.checkpoint, "checkpoint");
    corpora.push_back(std::move(c));
  }
  const fs::path dir = cfg.out / "crosscorpus";
  const CrossCorpusResult r = CrossCorpusMatrix(corpora, finetune, cfg.train, dir);
  WriteFile(dir / "matrix.csv", RenderMatrixCsv(r));
  WriteFile(dir / "matrix.txt", RenderMatrixText(r));
  out << RenderMatrixText(r);
  WriteSummary(cfg.out, "crosscorpus", cfg.hash, r.errors.empty() ? "ok" : "partial",
               {{"matrix", (dir / "matrix.csv").string()}, {"finetune", finetune}, {"errors", r.errors}});
  return r.errors.empty() ? kExitOk : kExitPartial;
}

int CmdInspect(const fs::path& clip, const fs::path& ckpt_path, const fs::path& dir, std::ostream& out) {
  RequireFile(ckpt_path, "checkpoint");
  RequireFile(clip, "clip");
  const Checkpoint<float> ck = LoadCheckpoint<float>(ckpt_path);
  const ModelConfig& mc = ck.model.cfg;
  if (mc.attention == AttentionMode::kNone) {
    throw InvalidInput("checkpoint " + ckpt_path.string() +
                       " was trained with attention_mode=none and has no attention map to inspect");
  }
  const FeatureTensor<double> full = ExtractFeatures(LoadClip(clip));
  if (full.frames() != mc.frames) {
    throw InvalidInput("clip " + clip.string() + " gives " + std::to_string(full.frames()) +
                       " frames; the checkpoint expects " + std::to_string(mc.frames));
  }
  const FeatureTensor<float> x = SelectChannels(full, mc.features).cast<float>();
  const Prediction<float> p = Predict(ck.model, x);
  WriteFile(dir / "spectrogram.csv", MatrixCsv(full.channels[0]));
  json maps = json::array();
  for (Index c = 0; c < p.attention_map->channels(); ++c) {
    const std::string name = "attention_" + std::to_string(c) + ".csv";
    WriteFile(dir / name, MatrixCsv(ChannelImage(*p.attention_map, 0, c).cast<double>()));
    maps.push_back(name);
  }
  CsvTable fw;
  fw.header = {"frame", "time_s", "yhat"};
  for (Index t = 0; t < p.framewise.cols(); ++t) {
    fw.rows.push_back({std::to_string(t), FormatDouble(t * full.frame_hop_s),
                       FormatDouble(p.framewise(0, t))});
  }
  WriteFile(dir / "framewise.csv", FormatCsv(fw));
  const json summary = {{"clip", clip.string()},
                        {"checkpoint", ckpt_path.string()},
                        {"yhat", static_cast<double>(p.utterance[0])},
                        {"frames", p.framewise.cols()},
                        {"attention_mode", ToString(mc.attention)},
                        {"attention_maps", maps}};
  WriteFile(dir / "inspect.json", summary.dump(2) + "\n");
  out << "yhat " << FormatDouble(p.utterance[0]) << " m over " << p.framewise.cols() << " frames; "
      << maps.size() << " attention map channel(s) in " << dir.string() << "\n";
  return kExitOk;
}

int CmdStats(const fs::path& manifest, const BinSpec& bins, const fs::path& json_out, std::ostream& out) {
  const DatasetManifest m = ReadRequiredManifest(manifest);
  const DatasetSummary s = DatasetStats(m, bins);
  out << s.ToText();
  if (!json_out.empty()) WriteFile(json_out, s.ToJson().dump(2) + "\n");
  return kExitOk;
}

}  // namespace

// ------------------------------------------------------------------- config

json YamlToJson(const std::string& text) {
  try {
    return ConvertYaml(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw InvalidInput(std::string("config is not valid YAML: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::FromYaml(const std::string& text, const Overrides& o) {
  json j = YamlToJson(text);
  if (j.is_null()) j = json::object();
  if (!j.is_object()) throw InvalidInput("config must be a mapping");
  ExperimentConfig c;
  json model = json::object(), train = json::object();
  json grid;
  std::optional<std::uint64_t> seed;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "out") c.out = v.get<std::string>();
      else if (key == "seed") seed = v.get<std::uint64_t>();
      else if (key == "dataset") {
        if (!v.is_object()) throw InvalidInput("dataset must be a mapping");
        for (const auto& [k, w] : v.items()) {
          if (k == "kind") c.dataset.kind = RealismFromString(w.get<std::string>());
          else if (k == "manifest") c.dataset.manifest = w.get<std::string>();
          else c.dataset.params[k] = w;
        }
      } else if (key == "model") model = v;
      else if (key == "train") train = v;
      else if (key == "folds") c.folds = v.get<std::vector<int>>();
      else if (key == "bins") c.bins = BinsFromJson(v);
      else if (key == "ci") c.ci = CiModeFromString(v.get<std::string>());
      else if (key == "checkpoint") c.checkpoint = v.get<std::string>();
      else if (key == "snr_sweep") {
        for (const auto& s : v) c.snr_sweep.push_back(SnrFromJson(s));
      } else if (key == "feature_sets") {
        c.feature_sets = v.get<std::vector<std::string>>();
        for (const auto& f : c.feature_sets) ChannelSubsetFromString(f);
      } else if (key == "grid") grid = v;
      else if (key == "corpora") {
        for (const auto& e : v) {
          for (const auto& [k, w] : e.items()) {
            if (k != "name" && k != "config") throw InvalidInput("unknown corpora key '" + k + "'");
          }
          if (!e.contains("name") || !e.contains("config")) {
            throw InvalidInput("each corpora entry needs name and config");
          }
          c.corpora.emplace_back(e["name"].get<std::string>(), e["config"].get<std::string>());
        }
      } else if (key == "finetune") c.finetune = v.get<bool>();
      else if (key == "dump_framewise") c.dump_framewise = v.get<bool>();
      else throw InvalidInput("unknown config key '" + key + "'");
    }
    if (o.seed) seed = o.seed;
    if (!o.out.empty()) c.out = o.out;
    if (seed) {
      c.dataset.params["seed"] = *seed;
      train["seed"] = *seed;
    }
    if (!o.finetune_from.empty()) train["finetune_from"] = o.finetune_from;
    c.dataset.params = CanonicalParams(c.dataset.kind, c.dataset.params);
    c.model = ModelConfig::FromJson(model);
    c.train = TrainConfig::FromJson(train);
    if (c.feature_sets.empty()) c.feature_sets = {ToString(c.model.features)};
    if (grid.is_string()) {
      const std::string g = grid.get<std::string>();
      if (g == "architecture") c.grid = ArchitectureGrid(c.model);
      else if (g == "attention") c.grid = AttentionGrid(c.model);
      else if (g == "features") c.grid = FeatureGrid(c.model);
      else throw InvalidInput("unknown grid '" + g + "' (architecture, attention, features, or a list)");
    } else if (grid.is_array()) {
      for (const auto& e : grid) {
        json merged = c.model.ToJson();
        for (const auto& [k, w] : e.items()) merged[k] = w;
        c.grid.push_back(ModelConfig::FromJson(merged));
      }
    } else if (!grid.is_null()) {
      throw InvalidInput("grid must be a name or a list of model overrides");
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config has a value of the wrong type: ") + e.what());
  }

  json snrs = json::array();
  for (double s : c.snr_sweep) snrs.push_back(SnrKey(s));
  json grid_out = json::array();
  for (const auto& g : c.grid) grid_out.push_back(g.ToJson());
  json corpora = json::array();
  for (const auto& [n, p] : c.corpora) corpora.push_back({{"name", n}, {"config", p.string()}});
  c.resolved = {{"out", c.out.string()},
                {"dataset", {{"kind", RealismName(c.dataset.kind)},
                             {"manifest", c.dataset.manifest.string()},
                             {"params", c.dataset.params}}},
                {"model", c.model.ToJson()},
                {"train", c.train.ToJson()},
                {"folds", c.folds},
                {"bins", BinsText(c.bins)},
                {"ci", c.ci ? json(ToString(*c.ci)) : json(nullptr)},
                {"checkpoint", c.checkpoint.string()},
                {"snr_sweep", snrs},
                {"feature_sets", c.feature_sets},
                {"grid", grid_out},
                {"corpora", corpora},
                {"finetune", c.finetune},
                {"dump_framewise", c.dump_framewise}};
  c.hash = HexDigest(Fnv1a(c.resolved.dump()));
  return c;
}

ExperimentConfig ExperimentConfig::Load(const fs::path& path, const Overrides& o) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return FromYaml(ss.str(), o);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

fs::path ExperimentConfig::DatasetDir(std::optional<double> snr) const {
  if (snr) return out / "dataset" / ("snr_" + SnrKey(*snr));
  return out / "dataset";
}

fs::path ExperimentConfig::ManifestPath(std::optional<double> snr) const {
  if (!snr && !dataset.manifest.empty()) return dataset.manifest;
  return DatasetDir(snr) / "manifest.jsonl";
}

fs::path ExperimentConfig::FoldDir(int fold) const {
  return out / "train" / ("fold_" + std::to_string(fold));
}

fs::path ExperimentConfig::FamilyDir(const std::string& feature_set) const {
  return out / "train" / feature_set;
}

json ExperimentConfig::BuilderParams(std::optional<double> snr) const {
  json p = dataset.params;
  if (snr) p["snr_db"] = std::isinf(*snr) ? json(nullptr) : json(*snr);
  return CanonicalParams(dataset.kind, p);
}

std::vector<int> ExperimentConfig::ResolveFolds(const DatasetManifest& m) const {
  if (!folds.empty()) {
    for (int f : folds) {
      if (f < 0 || (m.num_folds > 0 && f >= m.num_folds) || (m.num_folds == 0 && f != 0)) {
        throw InvalidInput("fold " + std::to_string(f) + " does not exist in the dataset");
      }
    }
    return folds;
  }
  std::vector<int> all;
  for (int f = 0; f < std::max(1, m.num_folds); ++f) all.push_back(f);
  return all;
}

// --------------------------------------------------------------------- main

int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sdelab: single-channel speaker distance estimation experiments"};
  app.require_subcommand(1);
  app.footer("Environment: " + std::string(kWorkersEnv) + " sets the worker thread count.");

  std::string config, out_dir, finetune_from, clip, checkpoint, manifest, bins_text;
  std::uint64_t seed = 0;
  bool finetune = false;

  struct Sub {
    CLI::App* app;
    CLI::Option* seed;
  };
  std::map<std::string, Sub> subs;
  const std::vector<std::pair<std::string, std::string>> config_cmds = {
      {"generate", "build a dataset (manifest, audio, sidecars)"},
      {"train", "train models on a dataset"},
      {"eval", "evaluate checkpoints: reports, predictions, curves"},
      {"ablate", "train and evaluate a grid of model configs"},
      {"crosscorpus", "cross-corpus L1 matrix"}};
  for (const auto& [name, help] : config_cmds) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config, "experiment config (YAML)")->required();
    CLI::Option* so = s->add_option("--seed", seed, "override the dataset and training seeds");
    s->add_option("--out", out_dir, "override the run directory");
    if (name == "train" || name == "ablate") {
      s->add_option("--finetune-from", finetune_from, "initialize from this checkpoint");
    }
    if (name == "crosscorpus") s->add_flag("--finetune", finetune, "fine-tune off-diagonal cells");
    subs[name] = {s, so};
  }
  CLI::App* inspect = app.add_subcommand("inspect", "attention maps and frame-wise predictions for one clip");
  inspect->add_option("clip", clip, "16 kHz WAV clip")->required();
  inspect->add_option("--checkpoint", checkpoint, "checkpoint trained with attention")->required();
  inspect->add_option("--out", out_dir, "output directory (default: inspect)");
  CLI::App* stats = app.add_subcommand("stats", "dataset summary");
  stats->add_option("manifest", manifest, "manifest (JSON lines)");
  stats->add_option("--config", config, "experiment config naming the dataset");
  stats->add_option("--bins", bins_text, "distance bins, e.g. \"[1,2),[2,4)\"");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (inspect->parsed()) {
      return CmdInspect(clip, checkpoint, out_dir.empty() ? fs::path("inspect") : fs::path(out_dir), out);
    }
    if (stats->parsed()) {
      BinSpec bins = BinSpec::Synthetic();
      if (!bins_text.empty()) {
        bins = BinSpec::Parse(bins_text);
        bins.Validate();
      }
      if (!manifest.empty()) return CmdStats(manifest, bins, {}, out);
      if (config.empty()) throw InvalidInput("stats needs a manifest or --config");
      const ExperimentConfig cfg = ExperimentConfig::Load(config);
      if (bins_text.empty()) bins = cfg.bins;
      return CmdStats(cfg.ManifestPath(), bins, cfg.out / "dataset_stats.json", out);
    }
    for (const auto& [name, sub] : subs) {
      if (!sub.app->parsed()) continue;
      Overrides o;
      if (sub.seed->count()) o.seed = seed;
      o.out = out_dir;
      o.finetune_from = finetune_from;
      const ExperimentConfig cfg = ExperimentConfig::Load(config, o);
      fs::create_directories(cfg.out);
      WriteFile(cfg.out / "config.json", cfg.resolved.dump(2) + "\n");
      if (name == "generate") return CmdGenerate(cfg, out);
      if (name == "train") return CmdTrain(cfg, out);
      if (name == "eval") return CmdEval(cfg, out);
      if (name == "ablate") return CmdAblate(cfg, out);
      if (name == "crosscorpus") return CmdCrossCorpus(cfg, finetune || cfg.finetune, out);
    }
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPartial;
  }
  return kExitInvalid;
}

}  // namespace sde::cli
