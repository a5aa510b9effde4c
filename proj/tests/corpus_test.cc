// tests/corpus_test.cc
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

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nrser/corpus.hpp"
#include "test_util.hpp"

namespace nrser {
namespace {

using testing::DftMagnitude;
using testing::DominantFrequency;
using testing::TempDir;

std::string ReadAll(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double Kurtosis(std::span<const double> x) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double m2 = 0, m4 = 0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(x.size());
  m4 /= static_cast<double>(x.size());
  return m4 / (m2 * m2);
}

// Fraction of direct-DFT energy below `hz` over a 4096-sample segment.
double LowBandFraction(const Waveform& w, double hz) {
  constexpr std::size_t kN = 4096;
  double low = 0, total = 0;
  for (std::size_t k = 1; k < kN / 2; ++k) {
    const double f = static_cast<double>(k) * kSampleRate / kN;
    const double m = DftMagnitude(w.samples(), f, 8000, 8000 + kN);
    total += m * m;
    if (f < hz) low += m * m;
  }
  return low / total;
}

TEST(SynthUtterance, Deterministic) {
  const Waveform a = SynthUtterance(Emotion::kAngry, "spk0", 2.0, 7);
  const Waveform b = SynthUtterance(Emotion::kAngry, "spk0", 2.0, 7);
  ASSERT_EQ(a.size(), 32000u);
  EXPECT_TRUE(std::equal(a.samples().begin(), a.samples().end(), b.samples().begin()));
  const Waveform c = SynthUtterance(Emotion::kAngry, "spk0", 2.0, 8);
  EXPECT_FALSE(std::equal(a.samples().begin(), a.samples().end(), c.samples().begin()));
}

TEST(SynthUtterance, SilentLeadInAndPeak) {
  for (Emotion e : kAllEmotions) {
    const Waveform w = SynthUtterance(e, "ses2_spk1", 1.3, 4);
    for (int i = 0; i < kLeadInSamples; ++i) ASSERT_EQ(w[i], 0.0);
    double peak = 0;
    for (double v : w.samples()) peak = std::max(peak, std::abs(v));
    EXPECT_LE(peak, 0.5);
    EXPECT_GT(peak, 0.1);
  }
}

TEST(SynthUtterance, ClassesDifferInFundamental) {
  const Waveform angry = SynthUtterance(Emotion::kAngry, "spk0", 2.0, 7);
  const Waveform sad = SynthUtterance(Emotion::kSad, "spk0", 2.0, 7);
  const double fa = DominantFrequency(angry, 60, 450, kLeadInSamples);
  const double fs = DominantFrequency(sad, 60, 450, kLeadInSamples);
  EXPECT_GE(std::abs(fa - fs), 60.0) << fa << " vs " << fs;
}

TEST(SynthUtterance, RejectsBadDuration) {
  EXPECT_THROW(SynthUtterance(Emotion::kSad, "s", 0.5, 0), UsageError);
  EXPECT_THROW(SynthUtterance(Emotion::kSad, "s", 3.5, 0), UsageError);
}

TEST(SynthNoise, BasicProperties) {
  for (NoiseKind k : {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kTonalBabble,
                      NoiseKind::kImpulsive}) {
    const Waveform a = SynthNoise(k, 5.0, 1);
    const Waveform b = SynthNoise(k, 5.0, 1);
    EXPECT_GT(Rms(a.samples()), 0.0);
    EXPECT_TRUE(std::equal(a.samples().begin(), a.samples().end(), b.samples().begin()));
    double peak = 0;
    for (double v : a.samples()) peak = std::max(peak, std::abs(v));
    EXPECT_LE(peak, 0.9);
  }
  EXPECT_THROW(SynthNoise(NoiseKind::kWhite, 7.0, 1), UsageError);
}

TEST(SynthNoise, PinkHasMoreLowBandEnergyThanWhite) {
  const double white = LowBandFraction(SynthNoise(NoiseKind::kWhite, 2.0, 3), 1000.0);
  const double pink = LowBandFraction(SynthNoise(NoiseKind::kPink, 2.0, 3), 1000.0);
  EXPECT_GT(pink, white);
}

TEST(SynthNoise, ImpulsiveIsHeavyTailed) {
  const double white = Kurtosis(SynthNoise(NoiseKind::kWhite, 5.0, 2).samples());
  const double impulsive = Kurtosis(SynthNoise(NoiseKind::kImpulsive, 5.0, 2).samples());
  EXPECT_GT(impulsive, white);
}

TEST(NoiseSets, Membership) {
  EXPECT_EQ(NoiseSetOf(NoiseKind::kWhite), NoiseSet::kMatched);
  EXPECT_EQ(NoiseSetOf(NoiseKind::kTonalBabble), NoiseSet::kMatched);
  EXPECT_EQ(NoiseSetOf(NoiseKind::kPink), NoiseSet::kUnmatched);
  EXPECT_EQ(NoiseSetOf(NoiseKind::kImpulsive), NoiseSet::kUnmatched);
  EXPECT_EQ(NoiseKindFromString(ToString(NoiseKind::kTonalBabble)), NoiseKind::kTonalBabble);
  EXPECT_THROW(NoiseKindFromString("rain"), DataError);
}

class DefaultCorpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("corpus");
    manifest_ = new Manifest(BuildCorpus(CorpusConfig{}, dir_->path()));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete dir_;
  }
  static TempDir* dir_;
  static Manifest* manifest_;
};
TempDir* DefaultCorpus::dir_ = nullptr;
Manifest* DefaultCorpus::manifest_ = nullptr;

TEST_F(DefaultCorpus, Layout) {
  const Manifest& m = *manifest_;
  EXPECT_EQ(m.utterances.size(), 200u);
  EXPECT_EQ(m.Sessions().size(), 5u);
  std::map<std::string, std::set<Emotion>> classes;
  for (const auto& u : m.utterances) {
    classes[u.speaker].insert(u.emotion);
    EXPECT_GE(u.duration_s, 1.0);
    EXPECT_LE(u.duration_s, 3.0);
  }
  EXPECT_EQ(classes.size(), 10u);
  for (const auto& [spk, c] : classes) EXPECT_EQ(c.size(), 4u) << spk;
  for (const auto& s : m.Sessions()) EXPECT_EQ(m.SpeakersOf(s).size(), 2u);
  for (const auto& n : m.noises) {
    const bool matched = n.id.rfind("white", 0) == 0 || n.id.rfind("tonal_babble", 0) == 0;
    EXPECT_EQ(n.noise_set, matched ? NoiseSet::kMatched : NoiseSet::kUnmatched) << n.id;
  }
  EXPECT_NO_THROW(m.Validate());
}

TEST_F(DefaultCorpus, RebuildIsByteIdentical) {
  TempDir other("corpus2");
  BuildCorpus(CorpusConfig{}, other.path());
  EXPECT_EQ(ReadAll(dir_->path() / "manifest.json"), ReadAll(other.path() / "manifest.json"));
  for (const auto& u : {manifest_->utterances.front(), manifest_->utterances.back()})
    EXPECT_EQ(ReadAll(manifest_->Resolve(u.path)), ReadAll(other.path() / u.path));
}

TEST_F(DefaultCorpus, ManifestJsonRoundTrip) {
  const Manifest m = LoadManifest(dir_->path() / "manifest.json");
  EXPECT_EQ(ManifestToJson(m), ManifestToJson(*manifest_));
  EXPECT_EQ(m.Resolve(m.utterances[0].path), manifest_->Resolve(manifest_->utterances[0].path));
}

// Nearest class centroid of the utterance-mean log-mel vector, with
// centroids from all other speakers.
TEST_F(DefaultCorpus, ClassesAreSeparable) {
  std::vector<Eigen::VectorXd> means;
  for (const auto& u : manifest_->utterances)
    means.push_back(Lmfb(ReadWav(manifest_->Resolve(u.path))).colwise().mean().transpose());
  int correct = 0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    std::array<Eigen::VectorXd, kNumEmotions> cent;
    std::array<int, kNumEmotions> count{};
    for (auto& c : cent) c = Eigen::VectorXd::Zero(kNumMelBins);
    for (std::size_t j = 0; j < means.size(); ++j) {
      if (manifest_->utterances[j].speaker == manifest_->utterances[i].speaker) continue;
      const auto k = static_cast<std::size_t>(manifest_->utterances[j].emotion);
      cent[k] += means[j];
      ++count[k];
    }
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < kNumEmotions; ++k) {
      const double d = (means[i] - cent[k] / count[k]).norm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    correct += best == static_cast<std::size_t>(manifest_->utterances[i].emotion);
  }
  EXPECT_GE(correct / 200.0, 0.9);
}

TEST(Manifest, ValidationErrors) {
  Manifest m;
  m.utterances.push_back({"a", "a.wav", Emotion::kSad, "spk0", "ses1", 1.0});
  m.utterances.push_back({"a", "b.wav", Emotion::kSad, "spk1", "ses1", 1.0});
  EXPECT_THROW(m.Validate(false), DataError);
  m.utterances[1].id = "b";
  m.utterances[1].speaker = "spk0";
  m.utterances[1].session = "ses2";
  EXPECT_THROW(m.Validate(false), DataError);
  m.utterances[1].session = "ses1";
  EXPECT_NO_THROW(m.Validate(false));
  EXPECT_THROW(m.Validate(true), DataError);
  EXPECT_THROW(ManifestFromJson("{not json", "."), DataError);
}

TEST(BuildCorpus, UnwritableDirectory) {
  TempDir dir("ro");
  std::ofstream(dir.path() / "file") << "x";
  CorpusConfig cfg;
  cfg.sessions = 2;
  cfg.utterances_per_speaker_per_class = 1;
  EXPECT_THROW(BuildCorpus(cfg, dir.path() / "file" / "sub"), DataError);
}

}  // namespace
}  // namespace nrser
