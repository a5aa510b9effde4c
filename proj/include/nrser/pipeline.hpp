// nrser/pipeline.hpp
// Copyright 2026 The nrser Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Run-directory orchestration shared by the command-line verbs.
//
// A run directory holds:
//   config.txt        resolved training configuration
//   seed.txt          run seed
//   fold.txt          LOSO fold index
//   version.txt       build version
//   command.txt       invoking command line
//   manifest.txt      manifest path and checksum
//   train_log.jsonl   one JSON object per epoch and split
//   model.ckpt        parameters of the selected epoch
//   summary.json      selection outcome and frozen-component checksums

#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "nrser/evalkit.hpp"
#include "nrser/trainer.hpp"

namespace nrser {

struct RunRequest {
  TrainConfig config;  // config.model selects the kind
  std::uint64_t seed = 0;
  int fold = 0;
  std::filesystem::path manifest_path;
  std::filesystem::path run_dir;
  std::filesystem::path reference_path;  // frozen clean checkpoint, compensating kinds
  std::vector<std::string> command;
};

/// Loads the reference (when required), trains and writes the run directory.
/// Throws DataError when the reference was trained on another fold.
TrainResult RunTraining(const RunRequest& req, CorpusData& data, std::ostream* log = nullptr);

std::string RunDirName(ModelKind kind, std::uint64_t seed, int fold);

/// "test" or "validation" speaker of the fold.
std::vector<const UtteranceRecord*> SplitUtterances(const Manifest& m, const FoldSplit& fold,
                                                    const std::string& split);

/// Fold lookup with a usage error for out-of-range indices.
const FoldSplit& FoldAt(const std::vector<FoldSplit>& folds, int index);

/// Evaluates checkpoints on the given split of each checkpoint's own fold and
/// averages over folds, then seeds.
EvalReport EvaluateCheckpoints(const std::vector<std::filesystem::path>& checkpoints,
                               CorpusData& data, const std::vector<Condition>& conditions,
                               const std::string& enhancer, const std::string& split = "test");

struct AblationOptions {
  TrainConfig config;  // shared settings; the kind is set per run
  std::filesystem::path manifest_path;
  std::filesystem::path out_dir;
  std::vector<std::string> command;
};

struct AblationResult {
  std::map<ModelKind, EvalReport> reports;
  std::vector<std::filesystem::path> run_dirs;
  std::string table;
};

/// For every fold and seed: trains baseline_c, then the other five kinds
/// against it as frozen reference; evaluates all on the test speakers and
/// writes runs/, reports/<kind>.json, comparison.md and comparison.json.
AblationResult RunAblation(const AblationOptions& opts, CorpusData& data,
                           std::ostream* log = nullptr);

/// Markdown table, one row per kind: clean, matched and unmatched averages,
/// per-SNR matched UAR and mean c.
std::string ComparisonTable(const std::map<ModelKind, EvalReport>& reports,
                            const std::vector<double>& snrs);

void WriteTextFile(const std::filesystem::path& path, const std::string& text);

}  // namespace nrser
