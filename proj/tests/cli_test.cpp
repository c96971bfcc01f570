// tests/cli_test.cpp

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

#include <gtest/gtest.h>

#include <sstream>

#include "sde/audio.hpp"
#include "sde/csv.hpp"
#include "test_util.hpp"

namespace sde::cli {
namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome Sdelab(std::vector<std::string> args) {
  args.insert(args.begin(), "sdelab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = Run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Tiny model, 0.25 s clips, 12 scenes.
std::string TinyYaml(const std::filesystem::path& out, const std::string& extra = "",
                     double duration_s = 0.25) {
  return "out: " + out.string() +
         "\n"
         "seed: 3\n"
         "dataset:\n"
         "  kind: synthetic\n"
         "  num_scenes: 12\n"
         "  split_counts: [8, 2, 2]\n"
         "  duration_s: " + FormatDouble(duration_s) +
         "\n"
         "  write_rirs: false\n"
         "  rir: {length_s: 0.3}\n"
         "model:\n"
         "  conv_filters: [2, 3, 4]\n"
         "  attention_filters: [2, 3]\n"
         "  recurrent_width: 4\n"
         "  head_width: 4\n"
         "train: {epochs: 2, batch_size: 4}\n" +
         extra;
}

std::filesystem::path WriteConfig(const testing::TempDir& dir, const std::string& name,
                                  const std::string& yaml) {
  const auto p = dir / name;
  testing::Spit(p, yaml);
  return p;
}

TEST(YamlTest, ScalarTyping) {
  const auto j = YamlToJson("a: 3\nb: 2.5\nc: true\nd: ~\ne: \"10\"\nf: .inf\ng: text\nh: 1e-3\n");
  EXPECT_TRUE(j["a"].is_number_integer());
  EXPECT_EQ(j["b"], 2.5);
  EXPECT_EQ(j["c"], true);
  EXPECT_TRUE(j["d"].is_null());
  EXPECT_EQ(j["e"], "10");
  EXPECT_TRUE(std::isinf(j["f"].get<double>()));
  EXPECT_EQ(j["g"], "text");
  EXPECT_EQ(j["h"], 1e-3);
  EXPECT_THROW(YamlToJson("a: [1, 2"), InvalidInput);
}

TEST(ConfigTest, UnknownKeysAndTypesRejected) {
  EXPECT_NO_THROW(ExperimentConfig::FromYaml(TinyYaml("r")));
  EXPECT_THROW(ExperimentConfig::FromYaml(TinyYaml("r", "colour: red\n")), InvalidInput);
  EXPECT_THROW(ExperimentConfig::FromYaml("model: {kernel_size: 3}\n"), InvalidInput);
  EXPECT_THROW(ExperimentConfig::FromYaml("dataset: {kind: synthetic, scenes: 3}\n"), InvalidInput);
  EXPECT_THROW(ExperimentConfig::FromYaml("dataset: {kind: hybrid, num_scenes: 3}\n"), InvalidInput);
  EXPECT_THROW(ExperimentConfig::FromYaml("train: {epochs: many}\n"), InvalidInput);
  EXPECT_THROW(ExperimentConfig::FromYaml("train: {momentum: 0.9}\n"), InvalidInput);
  EXPECT_THROW(ExperimentConfig::FromYaml("bins: \"[2,1)\"\n"), InvalidInput);
  EXPECT_THROW(ExperimentConfig::FromYaml("grid: everything\n"), InvalidInput);
  EXPECT_THROW(ExperimentConfig::FromYaml("corpora: [{name: a}]\n"), InvalidInput);
  EXPECT_THROW(ExperimentConfig::FromYaml("ci: bootstrap\n"), InvalidInput);
}

TEST(ConfigTest, ShippedConfigsLoad) {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(std::filesystem::path(SDE_SOURCE_DIR) / "configs")) {
    SCOPED_TRACE(e.path().string());
    EXPECT_NO_THROW(ExperimentConfig::Load(e.path()));
    ++n;
  }
  EXPECT_GE(n, 9);
}

TEST(ConfigTest, OverridesAndHash) {
  const ExperimentConfig a = ExperimentConfig::FromYaml(TinyYaml("r"));
  const ExperimentConfig b = ExperimentConfig::FromYaml(TinyYaml("r"));
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_EQ(a.train.seed, 3u);
  EXPECT_EQ(a.dataset.params["seed"], 3);
  Overrides o;
  o.seed = 9;
  o.out = "elsewhere";
  o.finetune_from = "x.ckpt";
  const ExperimentConfig c = ExperimentConfig::FromYaml(TinyYaml("r"), o);
  EXPECT_NE(c.hash, a.hash);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.dataset.params["seed"], 9);
  EXPECT_EQ(c.out, "elsewhere");
  EXPECT_EQ(c.train.finetune_from, "x.ckpt");
  EXPECT_EQ(ExperimentConfig::FromYaml("grid: architecture\n").grid.size(), 9u);
  EXPECT_EQ(ExperimentConfig::FromYaml("grid: attention\n").grid.size(), 3u);
  const auto listed = ExperimentConfig::FromYaml("grid: [{kernel_shape: square}, {num_recurrent_layers: 0}]\n");
  ASSERT_EQ(listed.grid.size(), 2u);
  EXPECT_EQ(listed.grid[0].kernel, KernelShape::kSquare);
  EXPECT_EQ(listed.grid[1].recurrent_layers, 0);
}

TEST(ExitCodeTest, UsageErrors) {
  EXPECT_EQ(Sdelab({}).code, kExitInvalid);
  EXPECT_EQ(Sdelab({"train"}).code, kExitInvalid);
  EXPECT_EQ(Sdelab({"frobnicate"}).code, kExitInvalid);
  EXPECT_EQ(Sdelab({"--help"}).code, kExitOk);
  const Outcome missing = Sdelab({"train", "--config", "/nonexistent/cfg.yaml"});
  EXPECT_EQ(missing.code, kExitInvalid);
  EXPECT_NE(missing.err.find("/nonexistent/cfg.yaml"), std::string::npos);
  testing::TempDir dir("cli_codes");
  const auto cfg = WriteConfig(dir, "c.yaml", TinyYaml(dir / "run"));
  const Outcome no_data = Sdelab({"train", "--config", cfg.string()});
  EXPECT_EQ(no_data.code, kExitInvalid);
  EXPECT_NE(no_data.err.find("manifest"), std::string::npos);
}

TEST(GenerateTest, MissingSpeechDirNamesPath) {
  testing::TempDir dir("cli_speech");
  const std::string missing = (dir / "no_speech_here").string();
  std::string yaml = TinyYaml(dir / "run");
  yaml.replace(yaml.find("  write_rirs"), 0, "  speech_dir: " + missing + "\n");
  const Outcome r = Sdelab({"generate", "--config", WriteConfig(dir, "c.yaml", yaml).string()});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST(GenerateTest, UpToDateDetection) {
  testing::TempDir dir("cli_gen");
  const auto cfg = WriteConfig(dir, "c.yaml", TinyYaml(dir / "run"));
  const Outcome first = Sdelab({"generate", "--config", cfg.string()});
  ASSERT_EQ(first.code, kExitOk) << first.err;
  EXPECT_NE(first.out.find("wrote 12 entries"), std::string::npos);
  const auto manifest = dir / "run/dataset/manifest.jsonl";
  const std::string bytes = testing::Slurp(manifest);
  const auto stamp = std::filesystem::last_write_time(manifest);
  const Outcome second = Sdelab({"generate", "--config", cfg.string()});
  EXPECT_EQ(second.code, kExitOk);
  EXPECT_NE(second.out.find("up-to-date"), std::string::npos);
  EXPECT_EQ(std::filesystem::last_write_time(manifest), stamp);
  const Outcome reseeded = Sdelab({"generate", "--config", cfg.string(), "--seed", "4"});
  EXPECT_EQ(reseeded.code, kExitOk);
  EXPECT_NE(reseeded.out.find("wrote 12 entries"), std::string::npos);
  EXPECT_NE(testing::Slurp(manifest), bytes);
  const Outcome stats = Sdelab({"stats", manifest.string()});
  EXPECT_EQ(stats.code, kExitOk);
  EXPECT_NE(stats.out.find("[8,14)"), std::string::npos);
}

TEST(PipelineTest, TrainEvalReportsAndIdempotence) {
  testing::TempDir dir("cli_pipe");
  std::vector<std::string> reports, preds, ckpts;
  for (const char* run : {"a", "b"}) {
    const auto cfg = WriteConfig(dir, std::string(run) + ".yaml", TinyYaml(dir / run, "dump_framewise: true\n"));
    for (const char* cmd : {"generate", "train", "eval"}) {
      const Outcome r = Sdelab({cmd, "--config", cfg.string()});
      ASSERT_EQ(r.code, kExitOk) << cmd << ": " << r.err;
    }
    reports.push_back(testing::Slurp(dir / run / "eval/report.csv"));
    preds.push_back(testing::Slurp(dir / run / "eval/predictions.jsonl"));
    ckpts.push_back(testing::Slurp(dir / run / "train/fold_0/best.ckpt"));
  }
  EXPECT_EQ(reports[0], reports[1]);
  EXPECT_EQ(preds[0], preds[1]);
  EXPECT_EQ(ckpts[0], ckpts[1]);

  const ReportTable t = ParseReportCsv(reports[0]);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].keys[0], "crnn");
  EXPECT_EQ(t.rows[1].keys[0], "mean_predictor");
  EXPECT_EQ(t.bin_labels, (std::vector<std::string>{"[1,2)", "[2,4)", "[4,8)", "[8,14)"}));
  const auto records = ReadPredictions(dir / "a/eval/predictions.jsonl");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(BinnedReport(records, BinSpec::Synthetic(), CiMode::kPerSample), *t.rows[0].report);
  EXPECT_TRUE(std::filesystem::exists(dir / "a/eval" / records[0].framewise_path));
  EXPECT_TRUE(std::filesystem::exists(dir / "a/eval/curve_distance.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a/run_summary.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a/config.json"));
}

TEST(AblateTest, ArchitectureGridHasNineRows) {
  testing::TempDir dir("cli_ablate");
  std::string yaml = TinyYaml(dir / "run", "grid: architecture\n");
  yaml.replace(yaml.find("epochs: 2"), 9, "epochs: 1");
  const auto cfg = WriteConfig(dir, "c.yaml", yaml);
  ASSERT_EQ(Sdelab({"generate", "--config", cfg.string()}).code, kExitOk);
  const Outcome r = Sdelab({"ablate", "--config", cfg.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const ReportTable t = ParseReportCsv(testing::Slurp(dir / "run/ablate/ablation.csv"));
  ASSERT_EQ(t.rows.size(), 9u);
  for (const auto& row : t.rows) EXPECT_TRUE(row.report.has_value()) << row.error;
  EXPECT_EQ(ParseReportText(testing::Slurp(dir / "run/ablate/ablation.txt")), t);
}

TEST(CrossCorpusTest, MatrixDiagonalMatchesEvalAndPartialFailure) {
  testing::TempDir dir("cli_cross");
  std::string corpora = "corpora:\n";
  std::vector<double> in_corpus;
  const std::vector<std::pair<std::string, std::string>> specs = {
      {"alpha", "  d_min: 1.0\n  d_max: 4.0\n"},
      {"beta", "  d_min: 4.0\n  d_max: 9.0\n"},
      {"gamma", "  d_min: 2.0\n  d_max: 12.0\n"}};
  for (const auto& [name, range] : specs) {
    std::string yaml = TinyYaml(dir / name);
    yaml.replace(yaml.find("  write_rirs"), 0, range);
    const auto cfg = WriteConfig(dir, name + ".yaml", yaml);
    for (const char* cmd : {"generate", "train", "eval"}) {
      const Outcome r = Sdelab({cmd, "--config", cfg.string()});
      ASSERT_EQ(r.code, kExitOk) << name << " " << cmd << ": " << r.err;
    }
    const ReportTable t = ParseReportCsv(testing::Slurp(dir / name / "eval/report.csv"));
    in_corpus.push_back(t.rows[0].report->average.l1->mean);
    corpora += "  - {name: " + name + ", config: " + cfg.string() + "}\n";
  }
  const auto cross = WriteConfig(dir, "cross.yaml", "out: " + (dir / "x").string() + "\n" + corpora);
  const Outcome r = Sdelab({"crosscorpus", "--config", cross.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const CsvTable m = ReadCsv(dir / "x/crosscorpus/matrix.csv");
  ASSERT_EQ(m.rows.size(), 3u);
  ASSERT_EQ(m.header.size(), 4u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(ParseDouble(m.rows[i][i + 1], "diag"), in_corpus[i]);
  }
  const Outcome ft = Sdelab({"crosscorpus", "--config", cross.string(), "--finetune", "--out",
                             (dir / "xf").string()});
  ASSERT_EQ(ft.code, kExitOk) << ft.err;
  const CsvTable mf = ReadCsv(dir / "xf/crosscorpus/matrix.csv");
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(mf.rows[i][i + 1], m.rows[i][i + 1]);

  // A corpus with longer clips cannot be scored by the short-clip models.
  const auto longer = WriteConfig(dir, "long.yaml", TinyYaml(dir / "long", "", 0.5));
  ASSERT_EQ(Sdelab({"generate", "--config", longer.string()}).code, kExitOk);
  ASSERT_EQ(Sdelab({"train", "--config", longer.string()}).code, kExitOk);
  const auto mixed = WriteConfig(dir, "mixed.yaml",
                                 "out: " + (dir / "y").string() + "\n" + corpora +
                                     "  - {name: long, config: " + longer.string() + "}\n");
  const Outcome partial = Sdelab({"crosscorpus", "--config", mixed.string()});
  EXPECT_EQ(partial.code, kExitPartial);
  EXPECT_NE(partial.out.find("frames"), std::string::npos);
}

TEST(SweepTest, SnrFamilyTrainAndEval) {
  testing::TempDir dir("cli_sweep");
  const auto cfg = WriteConfig(dir, "c.yaml",
                               TinyYaml(dir / "run", "snr_sweep: [10, clean]\nfeature_sets: [all, magnitude_only]\n"));
  for (const char* cmd : {"generate", "train", "eval"}) {
    const Outcome r = Sdelab({cmd, "--config", cfg.string()});
    ASSERT_EQ(r.code, kExitOk) << cmd << ": " << r.err;
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "run/dataset/snr_10/manifest.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run/dataset/snr_clean/manifest.jsonl"));
  const ReportTable t = ParseReportCsv(testing::Slurp(dir / "run/eval/sweep.csv"));
  ASSERT_EQ(t.rows.size(), 4u);
  for (const auto& row : t.rows) EXPECT_TRUE(row.report.has_value()) << row.error;
  const auto replay = ReadPredictions(dir / "run/eval/sweep/10_all.jsonl");
  EXPECT_EQ(BinnedReport(replay, BinSpec::Synthetic(), CiMode::kPerSample), *t.rows[0].report);
  EXPECT_TRUE(std::filesystem::exists(dir / "run/eval/curve_snr_all.csv"));
}

TEST(InspectTest, AttentionMapsFrameCountAndRefusals) {
  testing::TempDir dir("cli_inspect");
  ModelConfig mc;
  mc.conv_filters = {2, 3, 4};
  mc.attention_filters = {2, 3};
  mc.recurrent_width = 4;
  mc.head_width = 4;
  mc.frames = 624;
  SaveCheckpoint(dir / "att.ckpt", MakeModel<float>(mc, 1), StftConfig().Hash(), TrainingState());
  mc.attention = AttentionMode::kNone;
  SaveCheckpoint(dir / "none.ckpt", MakeModel<float>(mc, 1), StftConfig().Hash(), TrainingState());
  AudioClip clip;
  clip.samples = Eigen::VectorXd::Zero(10 * kSampleRate);
  Rng rng(2);
  std::normal_distribution<double> g(0.0, 0.1);
  for (Index i = 0; i < clip.samples.size(); ++i) clip.samples[i] = g(rng);
  WriteWav(dir / "clip.wav", clip);

  const Outcome ok = Sdelab({"inspect", (dir / "clip.wav").string(), "--checkpoint",
                             (dir / "att.ckpt").string(), "--out", (dir / "ins").string()});
  ASSERT_EQ(ok.code, kExitOk) << ok.err;
  EXPECT_EQ(ReadCsv(dir / "ins/framewise.csv").rows.size(), 624u);
  for (int c = 0; c < 3; ++c) {
    const std::string text = testing::Slurp(dir / ("ins/attention_" + std::to_string(c) + ".csv"));
    std::istringstream is(text);
    std::string line, cell;
    int rows = 0;
    while (std::getline(is, line)) {
      ++rows;
      std::istringstream ls(line);
      while (std::getline(ls, cell, ',')) {
        const double v = std::stod(cell);
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
    }
    EXPECT_EQ(rows, 624);
  }
  const Outcome none = Sdelab({"inspect", (dir / "clip.wav").string(), "--checkpoint",
                               (dir / "none.ckpt").string(), "--out", (dir / "ins2").string()});
  EXPECT_EQ(none.code, kExitInvalid);
  EXPECT_NE(none.err.find("attention_mode=none"), std::string::npos);
  EXPECT_EQ(Sdelab({"inspect", (dir / "clip.wav").string(), "--checkpoint",
                    (dir / "missing.ckpt").string()}).code,
            kExitInvalid);
}

}  // namespace
}  // namespace sde::cli
