// src/corpus.cpp
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

#include "nrser/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "binary_io.hpp"
#include "json.hpp"

namespace nrser {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct ClassVoice {
  double f0;
  double slope_hz_per_s;
  double am_rate_hz;
  double am_depth;
  double tilt;  // harmonic k has amplitude k^-tilt
};

ClassVoice VoiceOf(Emotion e) {
  switch (e) {
    case Emotion::kAngry: return {240.0, 20.0, 7.0, 0.6, 0.7};
    case Emotion::kHappy: return {300.0, 30.0, 5.0, 0.4, 0.9};
    case Emotion::kNeutral: return {180.0, 0.0, 3.0, 0.2, 1.2};
    case Emotion::kSad: return {120.0, -10.0, 2.0, 0.3, 1.6};
  }
  throw DataError("unknown emotion class");
}

void LimitPeak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > peak) {
    const double s = peak / m;
    for (double& v : x) v *= s;
  }
}

void ScaleToRms(std::vector<double>& x, double target) {
  const double r = Rms(x);
  if (r > 0.0)
    for (double& v : x) v *= target / r;
}

// Harmonic source with a linear pitch glide; phase is integrated so the glide
// stays continuous.
void AddHarmonicTone(std::vector<double>& out, std::size_t begin, std::size_t end,
                     double f0, double slope, double tilt, double gain,
                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase_dist(0.0, kTwoPi);
  const double f_max = f0 + std::max(0.0, slope) * (end - begin) / kSampleRate;
  const int harmonics = std::max(1, static_cast<int>(7000.0 / f_max));
  std::vector<double> phase(harmonics), amp(harmonics);
  for (int k = 0; k < harmonics; ++k) {
    phase[k] = phase_dist(rng);
    amp[k] = gain * std::pow(k + 1.0, -tilt);
  }
  double base_phase = 0.0;
  for (std::size_t n = begin; n < end; ++n) {
    const double t = static_cast<double>(n - begin) / kSampleRate;
    base_phase += kTwoPi * (f0 + slope * t) / kSampleRate;
    double s = 0.0;
    for (int k = 0; k < harmonics; ++k) s += amp[k] * std::sin((k + 1) * base_phase + phase[k]);
    out[n] += s;
  }
}

std::size_t SamplesFor(double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * kSampleRate));
}

}  // namespace

std::string_view ToString(NoiseKind k) {
  switch (k) {
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kPink: return "pink";
    case NoiseKind::kTonalBabble: return "tonal_babble";
    case NoiseKind::kImpulsive: return "impulsive";
  }
  return "?";
}

NoiseKind NoiseKindFromString(std::string_view s) {
  for (auto k : {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kTonalBabble,
                 NoiseKind::kImpulsive})
    if (ToString(k) == s) return k;
  throw DataError("unknown noise kind '" + std::string(s) + "'");
}

std::string_view ToString(NoiseSet s) {
  return s == NoiseSet::kMatched ? "matched" : "unmatched";
}

NoiseSet NoiseSetFromString(std::string_view s) {
  if (s == "matched") return NoiseSet::kMatched;
  if (s == "unmatched") return NoiseSet::kUnmatched;
  throw DataError("unknown noise set '" + std::string(s) + "'");
}

NoiseSet NoiseSetOf(NoiseKind k) {
  return (k == NoiseKind::kWhite || k == NoiseKind::kTonalBabble)
             ? NoiseSet::kMatched
             : NoiseSet::kUnmatched;
}

double BaseF0(Emotion e) { return VoiceOf(e).f0; }

double SpeakerF0Offset(const std::string& speaker) {
  const std::uint64_t h = MixSeed(HashString(speaker), 0x5eed);
  return -12.0 + 24.0 * static_cast<double>(h >> 11) * 0x1.0p-53;
}

Waveform SynthUtterance(Emotion emotion, const std::string& speaker,
                        double duration_s, std::uint64_t seed) {
  if (!(duration_s >= 1.0 && duration_s <= 3.0))
    throw UsageError("utterance duration must lie in [1.0, 3.0] s");
  const ClassVoice voice = VoiceOf(emotion);
  std::mt19937_64 rng(MixSeed(MixSeed(seed, HashString(speaker)),
                              static_cast<std::uint64_t>(emotion)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n = SamplesFor(duration_s);
  std::vector<double> x(n, 0.0);
  const std::size_t begin = kLeadInSamples;

  const double f0 = voice.f0 + SpeakerF0Offset(speaker) + (unit(rng) - 0.5) * 8.0;
  AddHarmonicTone(x, begin, n, f0, voice.slope_hz_per_s, voice.tilt, 1.0, rng);

  const double am_phase = unit(rng) * kTwoPi;
  const std::size_t ramp = SamplesFor(0.02);
  for (std::size_t i = begin; i < n; ++i) {
    const double t = static_cast<double>(i - begin) / kSampleRate;
    double env = 1.0 - voice.am_depth +
                 voice.am_depth * (0.5 + 0.5 * std::sin(kTwoPi * voice.am_rate_hz * t + am_phase));
    const std::size_t from_start = i - begin, to_end = n - 1 - i;
    const std::size_t edge = std::min(from_start, to_end);
    if (edge < ramp) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * edge / ramp);
    x[i] *= env;
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double target = 0.45 * (0.8 + 0.2 * unit(rng));
  if (peak > 0.0)
    for (double& v : x) v *= target / peak;
  return Waveform(std::move(x));
}

Waveform SynthNoise(NoiseKind kind, double duration_s, std::uint64_t seed) {
  if (!(duration_s >= 1.0 && duration_s <= 6.0))
    throw UsageError("noise duration must lie in [1.0, 6.0] s");
  std::mt19937_64 rng(MixSeed(seed, 0xa0 + static_cast<std::uint64_t>(kind)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = SamplesFor(duration_s);
  std::vector<double> x(n, 0.0);

  switch (kind) {
    case NoiseKind::kWhite:
      for (double& v : x) v = gauss(rng);
      ScaleToRms(x, 0.2);
      break;
    case NoiseKind::kPink: {
      // Paul Kellet's refined pink filter.
      double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
      for (double& v : x) {
        const double w = gauss(rng);
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
      }
      ScaleToRms(x, 0.2);
      break;
    }
    case NoiseKind::kTonalBabble: {
      const int voices = 4 + static_cast<int>(unit(rng) * 3.0);
      for (int v = 0; v < voices; ++v) {
        std::vector<double> voice(n, 0.0);
        const double f0 = 100.0 + 250.0 * unit(rng);
        const double slope = (unit(rng) - 0.5) * 60.0;
        AddHarmonicTone(voice, 0, n, f0, slope, 1.0 + unit(rng), 1.0, rng);
        // Syllable-rate gating with smooth on/off.
        const double rate = 2.0 + 3.0 * unit(rng);
        const double phase = unit(rng) * kTwoPi;
        for (std::size_t i = 0; i < n; ++i) {
          const double g = std::sin(kTwoPi * rate * i / kSampleRate + phase);
          voice[i] *= std::max(0.0, g);
        }
        ScaleToRms(voice, 1.0);
        for (std::size_t i = 0; i < n; ++i) x[i] += voice[i];
      }
      ScaleToRms(x, 0.15);
      break;
    }
    case NoiseKind::kImpulsive: {
      for (double& v : x) v = 0.01 * gauss(rng);
      const double rate = 4.0;  // bursts per second
      std::exponential_distribution<double> gap(rate);
      double t = gap(rng);
      while (t < duration_s) {
        const std::size_t start = SamplesFor(t);
        const double amp = 0.4 + 0.5 * unit(rng);
        const double decay = 0.002 + 0.006 * unit(rng);
        for (std::size_t i = start; i < n && i < start + SamplesFor(8 * decay); ++i) {
          const double dt = static_cast<double>(i - start) / kSampleRate;
          x[i] += amp * std::exp(-dt / decay) * gauss(rng);
        }
        t += gap(rng);
      }
      break;
    }
  }
  LimitPeak(x, 0.9);
  return Waveform(std::move(x));
}

fs::path Manifest::Resolve(const std::string& path) const {
  fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> Manifest::Sessions() const {
  std::set<std::string> s;
  for (const auto& u : utterances) s.insert(u.session);
  return {s.begin(), s.end()};
}

std::vector<std::string> Manifest::SpeakersOf(const std::string& session) const {
  std::vector<std::string> out;
  for (const auto& u : utterances)
    if (u.session == session && std::find(out.begin(), out.end(), u.speaker) == out.end())
      out.push_back(u.speaker);
  return out;
}

void Manifest::Validate(bool check_paths) const {
  std::set<std::string> ids;
  std::map<std::string, std::string> speaker_session;
  for (const auto& u : utterances) {
    if (!ids.insert(u.id).second) throw DataError("duplicate id '" + u.id + "'");
    auto [it, inserted] = speaker_session.emplace(u.speaker, u.session);
    if (!inserted && it->second != u.session)
      throw DataError("speaker '" + u.speaker + "' appears in sessions '" +
                      it->second + "' and '" + u.session + "'");
    if (check_paths && !fs::exists(Resolve(u.path)))
      throw DataError("missing utterance file '" + Resolve(u.path).string() + "'");
  }
  for (const auto& n : noises) {
    if (!ids.insert(n.id).second) throw DataError("duplicate id '" + n.id + "'");
    if (check_paths && !fs::exists(Resolve(n.path)))
      throw DataError("missing noise file '" + Resolve(n.path).string() + "'");
  }
}

std::string ManifestToJson(const Manifest& m) {
  json j;
  j["utterances"] = json::array();
  for (const auto& u : m.utterances) {
    j["utterances"].push_back({{"id", u.id},
                               {"path", u.path},
                               {"emotion", ToString(u.emotion)},
                               {"speaker", u.speaker},
                               {"session", u.session},
                               {"duration_s", u.duration_s}});
  }
  j["noises"] = json::array();
  for (const auto& n : m.noises)
    j["noises"].push_back({{"id", n.id}, {"path", n.path}, {"noise_set", ToString(n.noise_set)}});
  return j.dump(2) + "\n";
}

Manifest ManifestFromJson(const std::string& text, const fs::path& base_dir) {
  Manifest m;
  m.base_dir = base_dir;
  try {
    const json j = json::parse(text);
    for (const auto& u : j.at("utterances")) {
      UtteranceRecord r;
      r.id = u.at("id").get<std::string>();
      r.path = u.at("path").get<std::string>();
      r.emotion = EmotionFromString(u.at("emotion").get<std::string>());
      r.speaker = u.at("speaker").get<std::string>();
      r.session = u.at("session").get<std::string>();
      r.duration_s = u.at("duration_s").get<double>();
      m.utterances.push_back(std::move(r));
    }
    for (const auto& n : j.at("noises")) {
      m.noises.push_back({n.at("id").get<std::string>(), n.at("path").get<std::string>(),
                          NoiseSetFromString(n.at("noise_set").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

Manifest LoadManifest(const fs::path& path) {
  const auto bytes = io::ReadFile(path.string());
  Manifest m = ManifestFromJson(std::string(bytes.begin(), bytes.end()),
                                path.parent_path());
  m.Validate(true);
  return m;
}

void SaveManifest(const fs::path& path, const Manifest& m) {
  const std::string text = ManifestToJson(m);
  io::WriteFile(path.string(),
                std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void CorpusConfig::Validate() const {
  if (sessions < 1 || speakers_per_session < 1 || utterances_per_speaker_per_class < 1 ||
      noises_per_kind < 1)
    throw UsageError("corpus counts must be positive");
  if (!(min_duration_s >= 1.0 && max_duration_s <= 3.0 && min_duration_s <= max_duration_s))
    throw UsageError("utterance durations must lie in [1.0, 3.0] s");
  if (!(noise_duration_s >= 1.0 && noise_duration_s <= 6.0))
    throw UsageError("noise duration must lie in [1.0, 6.0] s");
}

Manifest BuildCorpus(const CorpusConfig& cfg, const fs::path& out_dir) {
  cfg.Validate();
  std::error_code ec;
  fs::create_directories(out_dir / "wav" / "utt", ec);
  if (!ec) fs::create_directories(out_dir / "wav" / "noise", ec);
  if (ec) throw DataError("cannot create output directory '" + out_dir.string() + "': " + ec.message());

  Manifest m;
  m.base_dir = out_dir;
  std::mt19937_64 dur_rng(MixSeed(cfg.seed, 0xd0));
  std::uniform_real_distribution<double> dur(cfg.min_duration_s, cfg.max_duration_s);
  std::uint64_t index = 0;
  char buf[128];
  for (int s = 0; s < cfg.sessions; ++s) {
    const std::string session = "ses" + std::to_string(s + 1);
    for (int k = 0; k < cfg.speakers_per_session; ++k) {
      const std::string speaker = session + "_spk" + std::to_string(k);
      for (Emotion e : kAllEmotions) {
        for (int u = 0; u < cfg.utterances_per_speaker_per_class; ++u, ++index) {
          // Round to whole 10 ms so durations print cleanly.
          const double d = std::round(dur(dur_rng) * 100.0) / 100.0;
          std::snprintf(buf, sizeof buf, "%s_%s_%02d", speaker.c_str(),
                        std::string(ToString(e)).c_str(), u);
          const std::string id = buf;
          const Waveform w = SynthUtterance(e, speaker, d, MixSeed(cfg.seed, index));
          const std::string rel = "wav/utt/" + id + ".wav";
          WriteWav(out_dir / rel, w);
          m.utterances.push_back({id, rel, e, speaker, session, w.duration_s()});
        }
      }
    }
  }
  std::uint64_t noise_index = 0;
  for (NoiseKind kind : {NoiseKind::kWhite, NoiseKind::kTonalBabble, NoiseKind::kPink,
                         NoiseKind::kImpulsive}) {
    for (int i = 0; i < cfg.noises_per_kind; ++i, ++noise_index) {
      std::snprintf(buf, sizeof buf, "%s_%02d", std::string(ToString(kind)).c_str(), i);
      const std::string id = buf;
      const Waveform w =
          SynthNoise(kind, cfg.noise_duration_s, MixSeed(cfg.seed, 0x100000 + noise_index));
      const std::string rel = "wav/noise/" + id + ".wav";
      WriteWav(out_dir / rel, w);
      m.noises.push_back({id, rel, NoiseSetOf(kind)});
    }
  }
  SaveManifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace nrser
