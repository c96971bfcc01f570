// tools/cli.hpp

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


// The sdelab command line: declarative experiment configs and the
// subcommands that run them.

#ifndef SDE_TOOLS_CLI_HPP_
#define SDE_TOOLS_CLI_HPP_

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sde/evaluation.hpp"
#include "sde/model.hpp"
#include "sde/scenegen.hpp"
#include "sde/training.hpp"

namespace sde::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitInvalid = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string finetune_from;
};

struct DatasetSpec {
  Realism kind = Realism::kSynthetic;
  std::filesystem::path manifest;  // existing manifest; empty: built under the run directory
  nlohmann::json params = nlohmann::json::object();  // builder keys
};

struct ExperimentConfig {
  std::filesystem::path out = "runs/default";
  DatasetSpec dataset;
  ModelConfig model;
  TrainConfig train;
  std::vector<int> folds;  // empty: every fold (k-fold) or fold 0
  BinSpec bins = BinSpec::Synthetic();
  std::optional<CiMode> ci;
  std::filesystem::path checkpoint;  // eval: explicit checkpoint
  std::vector<double> snr_sweep;     // SNR-family sweep; +inf is the clean set
  std::vector<std::string> feature_sets;
  std::vector<ModelConfig> grid;
  std::vector<std::pair<std::string, std::filesystem::path>> corpora;  // name, config
  bool finetune = false;
  bool dump_framewise = false;

  nlohmann::json resolved;  // canonical form after overrides
  std::string hash;         // digest of `resolved`

  // Unknown keys anywhere are rejected with InvalidInput.
  static ExperimentConfig FromYaml(const std::string& text, const Overrides& o = {});
  static ExperimentConfig Load(const std::filesystem::path& path, const Overrides& o = {});

  std::filesystem::path DatasetDir(std::optional<double> snr = std::nullopt) const;
  std::filesystem::path ManifestPath(std::optional<double> snr = std::nullopt) const;
  std::filesystem::path FoldDir(int fold) const;
  std::filesystem::path FamilyDir(const std::string& feature_set) const;
  // Builder config with the sweep SNR applied (+inf: noiseless).
  nlohmann::json BuilderParams(std::optional<double> snr = std::nullopt) const;
  std::vector<int> ResolveFolds(const DatasetManifest& m) const;
};

// YAML document to JSON: untagged scalars become null, bool, integer or
// float where they parse as one; quoted scalars stay strings.
nlohmann::json YamlToJson(const std::string& text);

// argv[0] is the program name. Diagnostics go to `err`.
int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sde::cli

#endif  // SDE_TOOLS_CLI_HPP_
