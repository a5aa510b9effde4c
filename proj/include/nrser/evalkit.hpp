// nrser/evalkit.hpp
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

// SNR-sweep evaluation, seed/fold averaging and embedding export.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nrser/metrics.hpp"
#include "nrser/trainer.hpp"

namespace nrser {

/// Clean input (no noise set) or one noise set at one SNR.
struct Condition {
  std::optional<NoiseSet> noise_set;
  double snr_db = 0.0;

  /// "clean", "matched_0", "unmatched_20", ...
  std::string Name() const;
  bool operator==(const Condition&) const = default;
};

/// Clean followed by each requested noise set at every SNR.
std::vector<Condition> StandardConditions(const std::vector<double>& snrs, bool matched = true,
                                          bool unmatched = true);

/// Inference views of one condition. The noise recording and crop offset
/// depend only on the utterance and the condition, so every model sees the
/// same mixtures.
struct EvalSet {
  Condition condition;
  std::vector<TrainingExample> views;
};

/// Noises are drawn from the pool of each utterance's session.
std::vector<EvalSet> BuildEvalSets(CorpusData& data,
                                   const std::vector<const UtteranceRecord*>& utterances,
                                   const std::vector<Condition>& conditions,
                                   const Enhancer* enhancer);

struct ConditionResult {
  std::string condition;
  ConfusionMatrix cm;
  double uar = 0;
  double war = 0;
  std::optional<double> mean_c;
};

/// Inference only; never reads the clean targets.
std::vector<ConditionResult> EvaluateModel(const Model& m, const std::vector<EvalSet>& sets);

struct Metrics {
  double uar = 0;
  double war = 0;
  std::optional<double> mean_c;
};

struct EvalRun {
  std::string label;
  std::uint64_t seed = 0;
  int fold = 0;
  std::vector<ConditionResult> results;
};

/// Per-run results, fold means per seed, and the mean over seeds. Group
/// entries "matched" and "unmatched" average the SNR conditions of a set.
struct EvalReport {
  std::string model;
  std::vector<std::string> conditions;
  std::vector<EvalRun> runs;
  std::map<std::uint64_t, std::map<std::string, Metrics>> by_seed;
  std::map<std::string, Metrics> summary;

  std::string ToJson() const;
};

EvalReport Summarize(std::string model, std::vector<EvalRun> runs);

struct EmbeddingRow {
  std::string id;
  Emotion emotion = Emotion::kNeutral;
  std::string condition;
  std::string snr;  // "clean" or dB value
  std::vector<double> values;
};

/// Calibrated representation per (utterance, condition); the encoder output
/// for baselines.
std::vector<EmbeddingRow> ComputeEmbeddings(const Model& m, const std::vector<EvalSet>& sets);
/// Header: id,emotion,condition,snr,e0..e255.
std::string EmbeddingsToCsv(const std::vector<EmbeddingRow>& rows);
std::vector<EmbeddingRow> EmbeddingsFromCsv(const std::string& text);

/// Mean distance between centroids of the same emotion under different
/// conditions, divided by the mean distance between centroids of different
/// emotions (all conditions pooled).
double CentroidShift(const std::vector<EmbeddingRow>& rows);

}  // namespace nrser
