// tests/evalkit_test.cc
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

#include <random>
#include <set>

#include "json.hpp"
#include "nrser/evalkit.hpp"
#include "test_util.hpp"

namespace nrser {
namespace {

using testing::TempDir;

ConfusionMatrix FromRecalls(const std::array<std::uint64_t, 4>& support,
                            const std::array<std::uint64_t, 4>& correct) {
  ConfusionMatrix cm;
  for (std::size_t c = 0; c < 4; ++c) {
    cm.Add(c, c, correct[c]);
    cm.Add(c, (c + 1) % 4, support[c] - correct[c]);
  }
  return cm;
}

TEST(Metrics, DiagonalIsPerfect) {
  ConfusionMatrix cm;
  for (std::size_t c = 0; c < 4; ++c) cm.Add(c, c, 3 + c);
  EXPECT_EQ(Uar(cm), 1.0);
  EXPECT_EQ(War(cm), 1.0);
}

TEST(Metrics, WorkedExamples) {
  EXPECT_DOUBLE_EQ(Uar(FromRecalls({2, 2, 2, 2}, {2, 1, 2, 1})), 0.75);
  const ConfusionMatrix cm = FromRecalls({10, 10, 10, 70}, {10, 10, 10, 0});
  EXPECT_DOUBLE_EQ(Uar(cm), 0.75);
  EXPECT_DOUBLE_EQ(War(cm), 0.30);
  EXPECT_EQ(cm.Support(3), 70u);
  EXPECT_EQ(cm.Total(), 100u);
  EXPECT_EQ(cm.Correct(), 30u);
}

TEST(Metrics, ZeroSupportIsAnError) {
  ConfusionMatrix cm;
  cm.Add(0, 0);
  cm.Add(1, 1);
  cm.Add(2, 2);
  EXPECT_THROW(Uar(cm), DataError);
  EXPECT_EQ(War(ConfusionMatrix{}), 0.0);
}

TEST(Metrics, MatchBruteForceRecount) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 4 + rng() % 200;
    std::vector<std::size_t> ref(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      ref[i] = i < 4 ? i : rng() % 4;  // every class present
      pred[i] = rng() % 4;
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < n; ++i) cm.Add(ref[i], pred[i]);
    double recall_sum = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      std::size_t hit = 0, total = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (ref[i] == c) {
          ++total;
          hit += pred[i] == c;
        }
      recall_sum += static_cast<double>(hit) / static_cast<double>(total);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += ref[i] == pred[i];
    ASSERT_EQ(Uar(cm), recall_sum / 4) << trial;
    ASSERT_EQ(War(cm), static_cast<double>(correct) / static_cast<double>(n)) << trial;
  }
}

TEST(Metrics, MergeAddsCounts) {
  ConfusionMatrix a = FromRecalls({2, 2, 2, 2}, {2, 1, 2, 1});
  a.Merge(FromRecalls({2, 2, 2, 2}, {0, 0, 0, 0}));
  EXPECT_EQ(a.Total(), 16u);
  EXPECT_EQ(a.Correct(), 6u);
}

Manifest InMemoryManifest(int sessions, int per_speaker) {
  Manifest m;
  for (int s = 1; s <= sessions; ++s)
    for (int k = 0; k < 2; ++k)
      for (int u = 0; u < per_speaker; ++u) {
        UtteranceRecord r;
        r.session = "ses" + std::to_string(s);
        r.speaker = r.session + "_spk" + std::to_string(k);
        r.id = r.speaker + "_u" + std::to_string(u);
        r.path = "wav/" + r.id + ".wav";
        r.emotion = static_cast<Emotion>(u % 4);
        r.duration_s = 1.0;
        m.utterances.push_back(r);
      }
  return m;
}

TEST(Loso, TenFoldsDisjointAndCovering) {
  const Manifest m = InMemoryManifest(5, 20);
  const std::vector<FoldSplit> folds = LosoSplits(m);
  ASSERT_EQ(folds.size(), 10u);
  std::set<std::string> test_speakers, all_speakers;
  for (const auto& u : m.utterances) all_speakers.insert(u.speaker);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const FoldSplit& f = folds[i];
    EXPECT_EQ(f.index, static_cast<int>(i));
    EXPECT_EQ(f.train_sessions.size(), 4u);
    EXPECT_NE(f.validation_speaker, f.test_speaker);
    std::set<std::string> train_ids;
    for (const auto* u : f.TrainUtterances(m)) {
      train_ids.insert(u->id);
      EXPECT_NE(u->speaker, f.test_speaker);
      EXPECT_NE(u->speaker, f.validation_speaker);
    }
    const auto test = f.SpeakerUtterances(m, f.test_speaker);
    const auto val = f.SpeakerUtterances(m, f.validation_speaker);
    EXPECT_EQ(test.size(), 20u);
    EXPECT_EQ(train_ids.size() + test.size() + val.size(), m.utterances.size());
    for (const auto* u : test) EXPECT_EQ(train_ids.count(u->id), 0u);
    test_speakers.insert(f.test_speaker);
  }
  EXPECT_EQ(test_speakers, all_speakers);
  // Companion folds swap roles.
  EXPECT_EQ(folds[0].validation_speaker, folds[1].test_speaker);
  EXPECT_EQ(folds[0].test_speaker, folds[1].validation_speaker);
}

TEST(Loso, InvalidManifests) {
  EXPECT_THROW(LosoSplits(InMemoryManifest(1, 4)), DataError);
  Manifest shared = InMemoryManifest(3, 4);
  shared.utterances.back().session = "ses1";  // ses3_spk1 now also in ses1
  EXPECT_THROW(LosoSplits(shared), DataError);
  Manifest three = InMemoryManifest(3, 4);
  UtteranceRecord extra = three.utterances.front();
  extra.speaker = "ses1_spk2";
  extra.id = "extra";
  three.utterances.push_back(extra);
  EXPECT_THROW(LosoSplits(three), DataError);
}

TEST(Conditions, StandardSweep) {
  const auto all = StandardConditions({0, 5, 10, 15, 20});
  ASSERT_EQ(all.size(), 11u);
  EXPECT_EQ(all[0].Name(), "clean");
  EXPECT_EQ(all[1].Name(), "matched_0");
  EXPECT_EQ(all[10].Name(), "unmatched_20");
  EXPECT_EQ(StandardConditions({0, 5, 10, 15, 20}, true, false).size(), 6u);
  EXPECT_EQ((Condition{NoiseSet::kMatched, 2.5}).Name(), "matched_2.5");
}

ConditionResult Result(std::string name, double uar, std::optional<double> c = std::nullopt) {
  ConditionResult r;
  r.condition = std::move(name);
  r.uar = uar;
  r.war = uar / 2;
  r.mean_c = c;
  return r;
}

TEST(Summarize, FoldsThenSeeds) {
  std::vector<EvalRun> runs;
  // seed 0: folds with clean UAR 0.2, 0.4; seed 1: one fold with 0.9.
  runs.push_back({"a", 0, 0, {Result("clean", 0.2, 1.0), Result("matched_0", 0.1, 0.2),
                              Result("matched_20", 0.3, 0.8)}});
  runs.push_back({"b", 0, 1, {Result("clean", 0.4, 1.0), Result("matched_0", 0.3, 0.4),
                              Result("matched_20", 0.5, 0.6)}});
  runs.push_back({"c", 1, 0, {Result("clean", 0.9, 1.0), Result("matched_0", 0.5, 0.0),
                              Result("matched_20", 0.7, 1.0)}});
  const EvalReport rep = Summarize("trnet", runs);
  EXPECT_EQ(rep.conditions, (std::vector<std::string>{"clean", "matched_0", "matched_20"}));
  EXPECT_NEAR(rep.by_seed.at(0).at("clean").uar, 0.3, 1e-15);
  EXPECT_NEAR(rep.by_seed.at(1).at("clean").uar, 0.9, 1e-15);
  // Pooling all three runs would give 0.5; fold-then-seed gives 0.6.
  EXPECT_NEAR(rep.summary.at("clean").uar, 0.6, 1e-15);
  EXPECT_NEAR(rep.summary.at("clean").war, 0.3, 1e-15);
  EXPECT_NEAR(*rep.summary.at("matched_0").mean_c, 0.15, 1e-15);
  // Group entry averages the SNR conditions of the set.
  EXPECT_NEAR(rep.summary.at("matched").uar, (0.35 + 0.55) / 2, 1e-15);
  EXPECT_EQ(rep.summary.count("unmatched"), 0u);

  const auto j = nlohmann::json::parse(rep.ToJson());
  EXPECT_EQ(j["model"], "trnet");
  EXPECT_EQ(j["runs"].size(), 3u);
  EXPECT_EQ(j["runs"][0]["results"]["clean"]["confusion"].size(), 4u);
  EXPECT_NEAR(j["summary"]["clean"]["uar"].get<double>(), 0.6, 1e-15);
  EXPECT_TRUE(j["by_seed"].contains("1"));

  runs[1].results.pop_back();
  EXPECT_THROW(Summarize("x", runs), DataError);
  EXPECT_THROW(Summarize("x", {}), DataError);
}

TEST(Summarize, BaselinesReportNullCoefficient) {
  const EvalReport rep = Summarize("baseline_c", {{"a", 0, 0, {Result("clean", 0.5)}}});
  const auto j = nlohmann::json::parse(rep.ToJson());
  EXPECT_TRUE(j["summary"]["clean"]["mean_c"].is_null());
}

TEST(Embeddings, CentroidShiftMatchesHandComputation) {
  // Two emotions, two conditions, 1-D embeddings.
  auto row = [](Emotion e, std::string cond, double v) {
    return EmbeddingRow{"u", e, cond, cond == "clean" ? "clean" : "0", {v, 0.0}};
  };
  const std::vector<EmbeddingRow> rows = {
      row(Emotion::kAngry, "clean", 0.0), row(Emotion::kAngry, "clean", 2.0),
      row(Emotion::kAngry, "matched_0", 3.0), row(Emotion::kSad, "clean", 10.0),
      row(Emotion::kSad, "matched_0", 12.0)};
  // within: |1 - 3| = 2 and |10 - 12| = 2 -> 2
  // between: angry centroid 5/3, sad 11 -> 28/3
  EXPECT_NEAR(CentroidShift(rows), 2.0 / (28.0 / 3.0), 1e-15);
  EXPECT_THROW(CentroidShift({rows[0], rows[1]}), DataError);
  EXPECT_THROW(CentroidShift({}), DataError);
}

TEST(Embeddings, CsvRoundTripIsExact) {
  std::vector<EmbeddingRow> rows;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int i = 0; i < 3; ++i) {
    EmbeddingRow r{"id" + std::to_string(i), static_cast<Emotion>(i), "matched_5", "5", {}};
    for (int d = 0; d < 256; ++d) r.values.push_back(n(rng));
    rows.push_back(r);
  }
  const std::string csv = EmbeddingsToCsv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')).rfind("id,emotion,condition,snr,e0,e1", 0), 0u);
  const auto back = EmbeddingsFromCsv(csv);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].id, rows[i].id);
    EXPECT_EQ(back[i].emotion, rows[i].emotion);
    EXPECT_EQ(back[i].snr, rows[i].snr);
    EXPECT_EQ(back[i].values, rows[i].values);
  }
  EXPECT_EQ(EmbeddingsToCsv(back), csv);
  EXPECT_THROW(EmbeddingsFromCsv("id,emotion\nx,sad\n"), DataError);
}

// End-to-end pieces on a tiny corpus.
class Evaluation : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("eval");
    manifest_ = new Manifest(testing::TinyCorpus(dir_->path()));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete dir_;
  }
  static TempDir* dir_;
  static Manifest* manifest_;
};
TempDir* Evaluation::dir_ = nullptr;
Manifest* Evaluation::manifest_ = nullptr;

TEST_F(Evaluation, CleanValidationReproducesTrainingUar) {
  const FoldSplit fold = LosoSplits(*manifest_)[0];
  CorpusData data(*manifest_);
  TrainConfig cfg;
  cfg.model = ModelKind::kBaselineC;
  cfg.batch = 4;
  cfg.max_epochs = 3;
  const TrainResult r = Train(cfg, 0, fold, data, nullptr);
  const auto sets = BuildEvalSets(data, fold.SpeakerUtterances(*manifest_, fold.validation_speaker),
                                  {Condition{}}, nullptr);
  const auto results = EvaluateModel(r.model, sets);
  ASSERT_EQ(results.size(), 1u);
  EXPECT_NEAR(results[0].uar, r.best_validation_uar, 1e-9);
  EXPECT_FALSE(results[0].mean_c.has_value());
}

TEST_F(Evaluation, ViewsAreSharedAcrossBuildsAndNeverReadTargets) {
  const FoldSplit fold = LosoSplits(*manifest_)[0];
  CorpusData data(*manifest_);
  const auto utts = fold.SpeakerUtterances(*manifest_, fold.test_speaker);
  const OracleWienerEnhancer enhancer;
  const auto conds = StandardConditions({0, 20});
  const auto a = BuildEvalSets(data, utts, conds, &enhancer);
  const auto b = BuildEvalSets(data, utts, conds, &enhancer);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t s = 0; s < a.size(); ++s) {
    EXPECT_EQ(a[s].condition, conds[s]);
    ASSERT_EQ(a[s].views.size(), utts.size());
    for (std::size_t i = 0; i < utts.size(); ++i) {
      EXPECT_TRUE((a[s].views[i].noisy().array() == b[s].views[i].noisy().array()).all());
      EXPECT_EQ(a[s].views[i].target_reads(), 0u);
    }
  }
  const Model m = Model::Create(ModelKind::kTrnet, 0);
  const auto results = EvaluateModel(m, a);
  for (const auto& set : a)
    for (const auto& v : set.views) EXPECT_EQ(v.target_reads(), 0u);
  ASSERT_EQ(results.size(), 5u);
  EXPECT_EQ(results[2].condition, "matched_20");
  for (const auto& r : results) {
    ASSERT_TRUE(r.mean_c.has_value());
    EXPECT_EQ(r.cm.Total(), utts.size());
  }
  EXPECT_NEAR(*results[0].mean_c, 1.0, 1e-12);
}

TEST_F(Evaluation, MissingNoiseSetIsAnError) {
  Manifest m = *manifest_;
  std::erase_if(m.noises, [](const NoiseRecord& n) { return n.noise_set == NoiseSet::kUnmatched; });
  CorpusData data(m);
  const FoldSplit fold = LosoSplits(m)[0];
  const auto utts = fold.SpeakerUtterances(m, fold.test_speaker);
  EXPECT_NO_THROW(BuildEvalSets(data, utts, StandardConditions({0}, true, false), nullptr));
  EXPECT_THROW(BuildEvalSets(data, utts, StandardConditions({0}), nullptr), DataError);
}

TEST_F(Evaluation, EmbeddingDumpShapeAndDeterminism) {
  const FoldSplit fold = LosoSplits(*manifest_)[0];
  CorpusData data(*manifest_);
  const auto utts = fold.SpeakerUtterances(*manifest_, fold.test_speaker);
  const OracleWienerEnhancer enhancer;
  const std::vector<Condition> conds = {Condition{}, Condition{NoiseSet::kMatched, 0},
                                        Condition{NoiseSet::kMatched, 20}};
  const auto sets = BuildEvalSets(data, utts, conds, &enhancer);
  const Model m = Model::Create(ModelKind::kTrnet, 1);
  const auto rows = ComputeEmbeddings(m, sets);
  EXPECT_EQ(rows.size(), 3 * utts.size());
  const std::string csv = EmbeddingsToCsv(rows);
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_GE(std::count(header.begin(), header.end(), ',') + 1, 259);
  EXPECT_EQ(EmbeddingsToCsv(ComputeEmbeddings(m, BuildEvalSets(data, utts, conds, &enhancer))),
            csv);
  EXPECT_GT(CentroidShift(rows), 0.0);
}

}  // namespace
}  // namespace nrser
