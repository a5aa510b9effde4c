// nrser/corpus.hpp
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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nrser/common.hpp"
#include "nrser/dsp.hpp"

namespace nrser {

struct UtteranceRecord {
  std::string id;
  std::string path;
  Emotion emotion = Emotion::kNeutral;
  std::string speaker;
  std::string session;
  double duration_s = 0.0;
};

enum class NoiseKind { kWhite, kPink, kTonalBabble, kImpulsive };
enum class NoiseSet { kMatched, kUnmatched };

std::string_view ToString(NoiseKind k);
NoiseKind NoiseKindFromString(std::string_view s);
std::string_view ToString(NoiseSet s);
NoiseSet NoiseSetFromString(std::string_view s);
/// matched = {white, tonal_babble}; unmatched = {pink, impulsive}.
NoiseSet NoiseSetOf(NoiseKind k);

struct NoiseRecord {
  std::string id;
  std::string path;
  NoiseSet noise_set = NoiseSet::kMatched;
};

/// Utterance and noise lists. Paths are stored as written in the JSON file
/// and resolved relative to the manifest's directory.
struct Manifest {
  std::vector<UtteranceRecord> utterances;
  std::vector<NoiseRecord> noises;
  std::filesystem::path base_dir;

  std::filesystem::path Resolve(const std::string& path) const;
  /// Sorted unique session names.
  std::vector<std::string> Sessions() const;
  /// Speakers of a session in order of first appearance.
  std::vector<std::string> SpeakersOf(const std::string& session) const;
  /// Checks unique ids, one session per speaker and, when check_paths is
  /// set, that every path exists.
  void Validate(bool check_paths = true) const;
};

std::string ManifestToJson(const Manifest& m);
Manifest ManifestFromJson(const std::string& text,
                          const std::filesystem::path& base_dir);
Manifest LoadManifest(const std::filesystem::path& path);
void SaveManifest(const std::filesystem::path& path, const Manifest& m);

inline constexpr double kLeadInSeconds = 0.25;
inline constexpr int kLeadInSamples = 4000;

/// Base fundamental frequency for an emotion class (Hz).
double BaseF0(Emotion e);
/// Deterministic speaker-specific f0 offset in [-12, 12] Hz.
double SpeakerF0Offset(const std::string& speaker);

/// 0.25 s of silence followed by a harmonic tone with class-dependent f0,
/// pitch slope, amplitude-modulation rate and spectral tilt. Peak <= 0.5.
Waveform SynthUtterance(Emotion emotion, const std::string& speaker,
                        double duration_s, std::uint64_t seed);

/// Synthetic stand-ins for environmental noise recordings. Peak <= 0.9.
Waveform SynthNoise(NoiseKind kind, double duration_s, std::uint64_t seed);

struct CorpusConfig {
  int sessions = 5;
  int speakers_per_session = 2;
  int utterances_per_speaker_per_class = 5;
  int noises_per_kind = 5;
  double min_duration_s = 1.0;
  double max_duration_s = 3.0;
  double noise_duration_s = 5.0;
  std::uint64_t seed = 0;

  void Validate() const;
};

/// Writes wav/utt/*.wav, wav/noise/*.wav and manifest.json under out_dir.
Manifest BuildCorpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace nrser
