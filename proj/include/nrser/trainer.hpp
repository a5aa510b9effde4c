// nrser/trainer.hpp
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

// Joint training of the recognizer, the SNR-aware compensation and the
// representation bridge, together with the baseline and ablation variants.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nrser/bridge.hpp"
#include "nrser/corpus.hpp"
#include "nrser/enhance.hpp"
#include "nrser/metrics.hpp"
#include "nrser/ser.hpp"
#include "nrser/snr_aware.hpp"

namespace nrser {

enum class ModelKind { kBaselineC, kBaselineN, kBaselineE, kTrnet, kTrnetNoLow, kTrnetNoHigh };

inline constexpr std::array<ModelKind, 6> kAllModelKinds = {
    ModelKind::kBaselineC, ModelKind::kBaselineN,  ModelKind::kBaselineE,
    ModelKind::kTrnet,     ModelKind::kTrnetNoLow, ModelKind::kTrnetNoHigh};

std::string_view ToString(ModelKind k);
ModelKind ModelKindFromString(std::string_view s);
/// Kinds with compensation and bridge stages.
bool IsCompensating(ModelKind k);
/// Kinds trained on clean plus matched-noise data.
bool UsesNoisyData(ModelKind k);
/// Kinds that read enhancer output.
bool UsesEnhancer(ModelKind k);

struct TrainConfig {
  ModelKind model = ModelKind::kTrnet;
  double alpha = 0.5;
  double beta = 0.5;
  double lr = 1e-3;
  std::size_t batch = 32;
  int max_epochs = 80;
  std::size_t max_frames = kMaxFrames;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string enhancer = "oracle_wiener";
  std::vector<double> snrs = {0, 5, 10, 15, 20};
  // Classifier reads the calibrated representation (false: raw encoder output).
  bool classify_calibrated = true;
  // Compensating kinds start their recognizer from the frozen reference.
  bool init_from_reference = true;
  std::vector<int> folds = {0};
  // Frozen clean checkpoint for compensating kinds; may be set per run.
  std::string reference;

  /// Weights actually applied: ablations zero their term.
  double EffectiveAlpha() const;
  double EffectiveBeta() const;
  /// Throws UsageError on out-of-range or inconsistent values.
  void Validate() const;
};

/// "key = value" lines; '#' starts a comment. Unknown keys are rejected.
TrainConfig ParseTrainConfig(std::string_view text);
std::string FormatTrainConfig(const TrainConfig& cfg);
TrainConfig LoadTrainConfig(const std::filesystem::path& path);

struct PaddedSpectrogram {
  Spectrogram values;      // [max_frames, F]
  std::vector<bool> mask;  // real frames
};

/// Keeps the first max_frames rows or pads with log(1e-10).
PaddedSpectrogram PadOrTruncate(const Spectrogram& s, std::size_t max_frames = kMaxFrames);

/// One (noisy, enhanced, clean) feature triple. Features hold the real
/// frames only (at most 500); the mask is the prefix of that length. The
/// clean target is reachable through target(), which counts reads so the
/// inference path can be audited.
class TrainingExample {
 public:
  TrainingExample(std::string id, Emotion label, Spectrogram noisy, Spectrogram enhanced,
                  Spectrogram target);

  const std::string& id() const { return id_; }
  Emotion label() const { return label_; }
  const Spectrogram& noisy() const { return noisy_; }
  const Spectrogram& enhanced() const { return enhanced_; }
  const Spectrogram& target() const {
    ++target_reads_;
    return target_;
  }
  std::size_t target_reads() const { return target_reads_; }
  std::size_t frames() const { return static_cast<std::size_t>(noisy_.rows()); }
  std::vector<bool> Mask(std::size_t max_frames = kMaxFrames) const;

  std::optional<double> snr_db;      // none for clean examples
  std::optional<double> measured_snr_db;
  std::string noise_id;

 private:
  std::string id_;
  Emotion label_;
  Spectrogram noisy_;
  Spectrogram enhanced_;
  Spectrogram target_;
  mutable std::size_t target_reads_ = 0;
};

/// Mixes `clean` with `noise` at `snr_db` (clean view when noise is null),
/// runs the enhancer (null: enhanced = noisy) and extracts features.
TrainingExample MakeTrainingView(const std::string& id, Emotion label, const Waveform& clean,
                                 const Waveform* noise, std::optional<double> snr_db,
                                 const Enhancer* enhancer, std::uint64_t crop_seed = 0,
                                 std::size_t max_frames = kMaxFrames);

struct Model {
  ModelKind kind = ModelKind::kBaselineC;
  SerParams ser;
  SnrAwareParams snr;
  BridgeParams bridge;
  bool classify_calibrated = true;
  int fold = 0;
  std::uint64_t seed = 0;

  static Model Create(ModelKind kind, std::uint64_t seed, bool classify_calibrated = true);
  std::vector<ag::Var> Trainable() const;
  std::vector<NamedTensor> Export() const;
  /// Parameters come back trainable.
  static Model Import(const std::vector<NamedTensor>& blocks);
  Model Clone() const;
  void Save(const std::filesystem::path& path) const;
  static Model Load(const std::filesystem::path& path);
};

/// h_s under frozen parameters; no graph is recorded.
ag::Tensor ReferenceRepresentation(const Spectrogram& clean, const SerParams& frozen);

struct ForwardOutput {
  ag::Var logits;        // [4]
  ag::Var rep;           // encoder output h
  ag::Var calibrated;    // bridge output (h for baselines)
  ag::Var coefficient;   // c, compensating kinds only
  ag::Var compensated;   // encoder input of compensating kinds
};

/// Inference path: reads noisy and enhanced features only.
ForwardOutput Forward(const Model& m, const Spectrogram& noisy, const Spectrogram& enhanced);

struct LossTerms {
  ag::Var total;
  ag::Var task;
  ag::Var low;   // undefined for baselines
  ag::Var high;  // undefined for baselines
};

/// Per-example terms; `reference_rep` (h_s) is required for compensating
/// kinds. Terms whose weight is zero are reported but left out of total.
LossTerms ExampleLoss(const Model& m, const TrainingExample& ex, const ag::Tensor* reference_rep,
                      double alpha, double beta, ForwardOutput* out = nullptr);

/// Batch mean of the per-example terms as one graph.
LossTerms TotalLoss(const Model& m, const std::vector<const TrainingExample*>& batch,
                    const std::vector<const ag::Tensor*>& reference_reps, double alpha,
                    double beta);

/// Utterance and noise waveforms behind a manifest, loaded on first use.
class CorpusData {
 public:
  explicit CorpusData(Manifest m);

  const Manifest& manifest() const { return manifest_; }
  const Waveform& Utterance(const UtteranceRecord& u);
  const Waveform& Noise(const NoiseRecord& n);
  /// Noises of a set reserved for a session: the j-th noise of the set
  /// belongs to session j mod S. Falls back to the whole set when a session
  /// would get none. Throws DataError when the set is empty.
  std::vector<const NoiseRecord*> NoisePool(NoiseSet set, const std::string& session) const;

 private:
  Manifest manifest_;
  std::vector<std::string> sessions_;
  std::map<std::string, Waveform> utterances_;
  std::map<std::string, Waveform> noises_;
};

/// Per-bin mean and standard deviation over the real frames of the clean
/// training utterances; std is floored at 1e-3.
std::pair<ag::Tensor, ag::Tensor> CleanNormalization(
    CorpusData& data, const std::vector<const UtteranceRecord*>& utterances);

struct EpochRecord {
  int epoch = 0;
  std::string split;
  std::size_t examples = 0;
  double loss_total = 0, loss_task = 0;
  std::optional<double> loss_low, loss_high;  // compensating kinds only
  double uar = 0, war = 0;
  // Keyed by "clean" or the SNR in dB; empty for baselines.
  std::map<std::string, double> mean_c;

  std::string ToJson() const;
};

struct TrainResult {
  Model model;  // parameters of the selected epoch
  int best_epoch = 0;
  double best_validation_uar = 0;
  double initial_validation_uar = 0;
  std::vector<EpochRecord> log;
};

/// Trains one run. `reference` is the frozen clean model required by the
/// compensating kinds; it is never modified.
TrainResult Train(const TrainConfig& cfg, std::uint64_t seed, const FoldSplit& fold,
                  CorpusData& data, const Model* reference,
                  const std::function<void(const EpochRecord&)>& on_record = {});

struct OverfitResult {
  bool reached = false;
  int steps = 0;  // updates applied before every example was classified correctly
  double accuracy = 0;
};

/// Full-batch Adam on a fixed set until the training accuracy reaches 100%.
OverfitResult OverfitProbe(Model model, const std::vector<const TrainingExample*>& batch,
                           const std::vector<const ag::Tensor*>& reference_reps, double alpha,
                           double beta, int max_steps = 300, double lr = 1e-3);

}  // namespace nrser
