// tests/cli_test.cc
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
#include <sstream>

#include "json.hpp"
#include "nrser/checkpoint.hpp"
#include "nrser/cli.hpp"
#include "nrser/trainer.hpp"
#include "test_util.hpp"

namespace nrser {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult Invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "nrser");
  std::ostringstream out, err;
  const int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::size_t CountEntries(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator()));
}

TEST(Cli, UnknownFlagWritesNothing) {
  TempDir dir("cli_flag");
  const CliResult r = Invoke({"synth-corpus", "--out", (dir.path() / "c").string(), "--bogus", "1"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(CountEntries(dir.path()), 0u);
}

TEST(Cli, UnknownVerbAndMissingVerb) {
  EXPECT_EQ(Invoke({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(Invoke({}).code, kExitUsage);
  EXPECT_EQ(Invoke({"--help"}).code, kExitOk);
}

TEST(Cli, BadValuesAreUsageErrors) {
  TempDir dir("cli_bad");
  EXPECT_EQ(Invoke({"selfcheck", "--seed", "abc"}).code, kExitUsage);
  EXPECT_EQ(Invoke({"train", "--out", dir.path().string(), "--model", "cnn"}).code, kExitUsage);
  EXPECT_EQ(Invoke({"train", "--out", dir.path().string(), "--snrs", "0,x"}).code, kExitUsage);
  EXPECT_EQ(Invoke({"train", "--out", dir.path().string()}).code, kExitUsage);  // no manifest
  EXPECT_EQ(Invoke({"train", "--out", dir.path().string(), "--manifest", "/nonexistent.json"}).code,
            kExitData);
  EXPECT_EQ(CountEntries(dir.path()), 0u);
}

TEST(Cli, SelfcheckPasses) {
  const CliResult r = Invoke({"selfcheck"});
  EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
  const std::string key = "max gradient-check relative error: ";
  const auto pos = r.out.find(key);
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + key.size())), 1e-4);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

// A tiny corpus and short training configuration shared by the pipeline tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli_pipeline");
    WriteFile(Root() / "corpus.cfg",
              "sessions = 2\nutterances_per_speaker_per_class = 1\nnoises_per_kind = 2\n"
              "min_duration_s = 1.0\nmax_duration_s = 1.0\nnoise_duration_s = 2.0\n");
    WriteFile(Root() / "train.cfg", "batch = 4\nmax_epochs = 1\nsnrs = 0, 10\n");
    const CliResult r = Invoke({"synth-corpus", "--config", (Root() / "corpus.cfg").string(), "--seed",
                             "3", "--out", (Root() / "corpus").string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static fs::path Root() { return dir_->path(); }
  static std::string Manifest() { return (Root() / "corpus" / "manifest.json").string(); }
  static std::string TrainCfg() { return (Root() / "train.cfg").string(); }
  static TempDir* dir_;
};
TempDir* Pipeline::dir_ = nullptr;

TEST_F(Pipeline, SynthCorpusIsDeterministic) {
  const fs::path other = Root() / "corpus2";
  ASSERT_EQ(Invoke({"synth-corpus", "--config", (Root() / "corpus.cfg").string(), "--seed", "3",
                 "--out", other.string()})
                .code,
            kExitOk);
  EXPECT_EQ(Slurp(other / "manifest.json"), Slurp(Manifest()));
  const auto m = nlohmann::json::parse(Slurp(Manifest()));
  EXPECT_EQ(m["utterances"].size(), 16u);
}

TEST_F(Pipeline, FeaturizeWritesCaches) {
  const fs::path out = Root() / "feat";
  const CliResult r = Invoke({"featurize", "--manifest", Manifest(), "--out", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(CountEntries(out / "features"), 16u);
  const auto index = nlohmann::json::parse(Slurp(out / "features.json"));
  EXPECT_EQ(index.size(), 16u);
  const Spectrogram s = ReadFeatureCache(out / index[0]["path"].get<std::string>());
  EXPECT_EQ(s.cols(), 80);
  EXPECT_EQ(s.rows(), index[0]["frames"].get<int>());
}

TEST_F(Pipeline, TrainRunDirectoryIsReproducible) {
  const fs::path out = Root() / "runs";
  const CliResult ref = Invoke({"pretrain-clean", "--config", TrainCfg(), "--seed", "0", "--manifest",
                             Manifest(), "--out", out.string()});
  ASSERT_EQ(ref.code, kExitOk) << ref.err;
  const fs::path ref_dir = out / "baseline_c_seed0_fold0";
  for (const char* f : {"config.txt", "seed.txt", "fold.txt", "version.txt", "command.txt",
                        "manifest.txt", "train_log.jsonl", "model.ckpt", "summary.json"})
    EXPECT_TRUE(fs::exists(ref_dir / f)) << f;
  EXPECT_EQ(Slurp(ref_dir / "seed.txt"), "0\n");
  EXPECT_FALSE(Slurp(ref_dir / "version.txt").empty());

  // The config snapshot reproduces the run exactly.
  const std::string snapshot = Slurp(ref_dir / "config.txt");
  EXPECT_EQ(FormatTrainConfig(ParseTrainConfig(snapshot)), snapshot);
  WriteFile(Root() / "snapshot.cfg", snapshot);
  const fs::path again = Root() / "again";
  ASSERT_EQ(Invoke({"train", "--config", (Root() / "snapshot.cfg").string(), "--seed", "0",
                 "--manifest", Manifest(), "--out", again.string()})
                .code,
            kExitOk);
  EXPECT_EQ(Slurp(again / "baseline_c_seed0_fold0" / "model.ckpt"), Slurp(ref_dir / "model.ckpt"));
  EXPECT_EQ(Slurp(again / "baseline_c_seed0_fold0" / "train_log.jsonl"),
            Slurp(ref_dir / "train_log.jsonl"));

  // Compensating kind on top of the frozen reference.
  const std::string ckpt = (ref_dir / "model.ckpt").string();
  const auto ref_sum = ChecksumOf(LoadCheckpoint(ckpt));
  const CliResult t = Invoke({"train", "--config", TrainCfg(), "--seed", "1", "--model", "trnet",
                           "--manifest", Manifest(), "--reference", ckpt, "--out", out.string()});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  EXPECT_EQ(ChecksumOf(LoadCheckpoint(ckpt)), ref_sum);
  const auto summary = nlohmann::json::parse(Slurp(out / "trnet_seed1_fold0" / "summary.json"));
  EXPECT_EQ(summary["reference_checksum"], summary["reference_checksum_after"]);
  const std::string log = Slurp(out / "trnet_seed1_fold0" / "train_log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);  // epoch-0 validation, train, validation

  // Evaluation and embedding export from the saved checkpoints.
  const fs::path report = Root() / "report.json";
  const CliResult e = Invoke({"evaluate", "--config", TrainCfg(), "--manifest", Manifest(),
                           "--checkpoint", (out / "trnet_seed1_fold0" / "model.ckpt").string(),
                           "--out", report.string()});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const auto rep = nlohmann::json::parse(Slurp(report));
  EXPECT_EQ(rep["conditions"].size(), 5u);  // clean + 2 sets x 2 SNRs
  EXPECT_EQ(rep["model"], "trnet");

  const fs::path emb = Root() / "emb.csv";
  const CliResult d = Invoke({"dump-embeddings", "--config", TrainCfg(), "--manifest", Manifest(),
                           "--checkpoint", (out / "trnet_seed1_fold0" / "model.ckpt").string(),
                           "--out", emb.string()});
  ASSERT_EQ(d.code, kExitOk) << d.err;
  const std::string csv = Slurp(emb);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 4);  // header + 4 utts x 3 views
}

TEST_F(Pipeline, ReferenceErrors) {
  const fs::path out = Root() / "noref";
  EXPECT_EQ(Invoke({"train", "--config", TrainCfg(), "--model", "trnet", "--manifest", Manifest(),
                 "--out", out.string()})
                .code,
            kExitUsage);
  EXPECT_EQ(Invoke({"train", "--config", TrainCfg(), "--model", "trnet", "--manifest", Manifest(),
                 "--reference", (Root() / "missing.ckpt").string(), "--out", out.string()})
                .code,
            kExitData);
  // A non-clean checkpoint cannot serve as the reference.
  const fs::path wrong = Root() / "wrong.ckpt";
  Model::Create(ModelKind::kBaselineN, 0).Save(wrong);
  EXPECT_EQ(Invoke({"train", "--config", TrainCfg(), "--model", "trnet", "--manifest", Manifest(),
                 "--reference", wrong.string(), "--out", out.string()})
                .code,
            kExitData);
  EXPECT_EQ(Invoke({"train", "--config", TrainCfg(), "--fold", "9", "--manifest", Manifest(), "--out",
                 out.string()})
                .code,
            kExitUsage);
}

TEST_F(Pipeline, AblateProducesEighteenRuns) {
  WriteFile(Root() / "zero.cfg", "batch = 4\nmax_epochs = 0\nsnrs = 0, 10\n");
  const fs::path out = Root() / "ablation";
  const CliResult r = Invoke({"ablate", "--config", (Root() / "zero.cfg").string(), "--seeds", "0,1,2",
                           "--manifest", Manifest(), "--out", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(CountEntries(out / "runs"), 18u);
  EXPECT_EQ(CountEntries(out / "reports"), 6u);
  for (const char* f : {"comparison.md", "comparison.json", "config.txt", "version.txt",
                        "command.txt"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  for (const char* kind : {"baseline_c", "baseline_n", "baseline_e", "trnet", "trnet_no_low",
                           "trnet_no_high"})
    EXPECT_NE(r.out.find(kind), std::string::npos) << kind;
}

}  // namespace
}  // namespace nrser
