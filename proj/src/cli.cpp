// src/cli.cpp
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

#include "nrser/cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nrser/pipeline.hpp"
#include "nrser/selfcheck.hpp"

namespace nrser {

namespace {

namespace fs = std::filesystem;

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
T ParseValue(const std::string& what, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw UsageError(what + ": cannot parse '" + std::string(v) + "'");
  return out;
}

template <typename T>
std::vector<T> ParseList(const std::string& what, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(ParseValue<T>(what, item));
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

CorpusConfig ParseCorpusConfig(const std::string& text) {
  CorpusConfig cfg;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw UsageError("corpus config: expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "sessions") cfg.sessions = ParseValue<int>(key, value);
    else if (key == "speakers_per_session") cfg.speakers_per_session = ParseValue<int>(key, value);
    else if (key == "utterances_per_speaker_per_class")
      cfg.utterances_per_speaker_per_class = ParseValue<int>(key, value);
    else if (key == "noises_per_kind") cfg.noises_per_kind = ParseValue<int>(key, value);
    else if (key == "min_duration_s") cfg.min_duration_s = ParseValue<double>(key, value);
    else if (key == "max_duration_s") cfg.max_duration_s = ParseValue<double>(key, value);
    else if (key == "noise_duration_s") cfg.noise_duration_s = ParseValue<double>(key, value);
    else if (key == "seed") cfg.seed = ParseValue<std::uint64_t>(key, value);
    else throw UsageError("unknown corpus config key '" + key + "'");
  }
  return cfg;
}

// Options shared by several verbs; empty means "not given".
struct Options {
  std::string config, out, manifest, enhancer, model, snrs, seeds, reference, split = "test";
  std::string folds;
  std::vector<std::string> checkpoints;
  std::optional<std::uint64_t> seed;
};

TrainConfig ResolveTrainConfig(const Options& o) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : LoadTrainConfig(o.config);
  if (!o.model.empty()) cfg.model = ModelKindFromString(o.model);
  if (!o.enhancer.empty()) cfg.enhancer = o.enhancer;
  if (!o.snrs.empty()) cfg.snrs = ParseList<double>("--snrs", o.snrs);
  if (!o.seeds.empty()) cfg.seeds = ParseList<std::uint64_t>("--seeds", o.seeds);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.folds.empty()) cfg.folds = ParseList<int>("--fold", o.folds);
  if (!o.reference.empty()) cfg.reference = o.reference;
  cfg.Validate();
  return cfg;
}

Manifest RequireManifest(const Options& o) {
  if (o.manifest.empty()) throw UsageError("--manifest is required");
  if (!fs::exists(o.manifest)) throw DataError("manifest '" + o.manifest + "' not found");
  Manifest m = LoadManifest(o.manifest);
  m.Validate();
  return m;
}

void RequireOut(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required");
}

int TrainVerb(const Options& o, const std::vector<std::string>& args, bool clean_only,
              std::ostream& out, std::ostream& err) {
  RequireOut(o);
  TrainConfig cfg = ResolveTrainConfig(o);
  if (clean_only) cfg.model = ModelKind::kBaselineC;
  CorpusData data(RequireManifest(o));
  for (int fold : cfg.folds) {
    for (std::uint64_t seed : cfg.seeds) {
      RunRequest req;
      req.config = cfg;
      req.seed = seed;
      req.fold = fold;
      req.manifest_path = o.manifest;
      req.run_dir = fs::path(o.out) / RunDirName(cfg.model, seed, fold);
      req.reference_path = cfg.reference;
      req.command = args;
      const TrainResult r = RunTraining(req, data, &err);
      out << req.run_dir.string() << " best_epoch=" << r.best_epoch
          << " validation_uar=" << r.best_validation_uar << "\n";
    }
  }
  return kExitOk;
}

int Dispatch(const std::string& verb, const Options& o, const std::vector<std::string>& args,
             std::ostream& out, std::ostream& err) {
  if (verb == "synth-corpus") {
    RequireOut(o);
    CorpusConfig cfg = o.config.empty() ? CorpusConfig{} : ParseCorpusConfig(ReadText(o.config));
    if (o.seed) cfg.seed = *o.seed;
    cfg.Validate();
    const Manifest m = BuildCorpus(cfg, o.out);
    out << "wrote " << m.utterances.size() << " utterances and " << m.noises.size()
        << " noises to " << (fs::path(o.out) / "manifest.json").string() << "\n";
    return kExitOk;
  }
  if (verb == "featurize") {
    RequireOut(o);
    const Manifest m = RequireManifest(o);
    const fs::path dir = fs::path(o.out) / "features";
    fs::create_directories(dir);
    nlohmann::ordered_json index = nlohmann::ordered_json::array();
    for (const UtteranceRecord& u : m.utterances) {
      const Spectrogram s = Lmfb(ReadWav(m.Resolve(u.path)));
      WriteFeatureCache(dir / (u.id + ".lmfb"), s);
      index.push_back({{"id", u.id}, {"path", "features/" + u.id + ".lmfb"}, {"frames", s.rows()}});
    }
    WriteTextFile(fs::path(o.out) / "features.json", index.dump(2) + "\n");
    out << "wrote " << m.utterances.size() << " feature files to " << dir.string() << "\n";
    return kExitOk;
  }
  if (verb == "pretrain-clean") return TrainVerb(o, args, true, out, err);
  if (verb == "train") return TrainVerb(o, args, false, out, err);
  if (verb == "evaluate" || verb == "dump-embeddings") {
    RequireOut(o);
    if (o.checkpoints.empty()) throw UsageError("--checkpoint is required");
    const TrainConfig cfg = ResolveTrainConfig(o);
    CorpusData data(RequireManifest(o));
    if (verb == "evaluate") {
      const EvalReport rep = EvaluateCheckpoints(
          {o.checkpoints.begin(), o.checkpoints.end()}, data, StandardConditions(cfg.snrs),
          cfg.enhancer, o.split);
      WriteTextFile(o.out, rep.ToJson());
      for (const auto& [name, m] : rep.summary)
        out << name << " uar=" << m.uar << " war=" << m.war << "\n";
      return kExitOk;
    }
    if (o.checkpoints.size() != 1) throw UsageError("dump-embeddings takes one --checkpoint");
    const Model m = Model::Load(o.checkpoints.front());
    const std::vector<FoldSplit> folds = LosoSplits(data.manifest());
    const std::unique_ptr<Enhancer> enhancer = MakeEnhancer(cfg.enhancer);
    const auto sets = BuildEvalSets(
        data, SplitUtterances(data.manifest(), FoldAt(folds, m.fold), o.split),
        StandardConditions(cfg.snrs, true, false), enhancer.get());
    const auto rows = ComputeEmbeddings(m, sets);
    WriteTextFile(o.out, EmbeddingsToCsv(rows));
    out << "wrote " << rows.size() << " embeddings to " << o.out
        << " (centroid shift " << CentroidShift(rows) << ")\n";
    return kExitOk;
  }
  if (verb == "ablate") {
    RequireOut(o);
    AblationOptions opts;
    opts.config = ResolveTrainConfig(o);
    opts.manifest_path = o.manifest;
    opts.out_dir = o.out;
    opts.command = args;
    CorpusData data(RequireManifest(o));
    const AblationResult r = RunAblation(opts, data, &err);
    out << r.table;
    return kExitOk;
  }
  if (verb == "selfcheck") {
    const std::uint64_t seed = o.seed.value_or(0);
    double worst_grad = 0;
    bool ok = true;
    for (const CheckOutcome& c : GradientSuite(seed)) {
      out << (c.passed ? "ok   " : "FAIL ") << c.name << " " << c.value << "\n";
      worst_grad = std::max(worst_grad, c.value);
      ok = ok && c.passed;
    }
    for (const CheckOutcome& c : DspSuite(seed)) {
      out << (c.passed ? "ok   " : "FAIL ") << c.name << " " << c.value << "\n";
      ok = ok && c.passed;
    }
    out << "max gradient-check relative error: " << worst_grad << "\n";
    if (!ok) {
      err << "ERROR (nrser selfcheck) one or more checks failed\n";
      return kExitNumerical;
    }
    return kExitOk;
  }
  throw UsageError("unknown verb '" + verb + "'");
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noise-robust speech emotion recognition toolkit", "nrser"};
  app.set_version_flag("--version", std::string(Version()));
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto add = [&](CLI::App* sub, std::initializer_list<std::string_view> flags) {
    for (std::string_view f : flags) {
      if (f == "config") sub->add_option("--config", o.config, "key = value configuration file");
      if (f == "seed") sub->add_option("--seed", seed, "run seed");
      if (f == "out") sub->add_option("--out", o.out, "output location");
      if (f == "manifest") sub->add_option("--manifest", o.manifest, "corpus manifest (JSON)");
      if (f == "enhancer")
        sub->add_option("--enhancer", o.enhancer, "identity | specsub | oracle_wiener");
      if (f == "model") sub->add_option("--model", o.model, "model kind");
      if (f == "snrs") sub->add_option("--snrs", o.snrs, "comma-separated SNRs in dB");
      if (f == "seeds") sub->add_option("--seeds", o.seeds, "comma-separated seeds");
      if (f == "fold") sub->add_option("--fold", o.folds, "comma-separated LOSO fold indices");
      if (f == "reference")
        sub->add_option("--reference", o.reference, "frozen baseline_c checkpoint");
      if (f == "checkpoint")
        sub->add_option("--checkpoint", o.checkpoints, "model checkpoint(s)")->delimiter(',');
      if (f == "split") sub->add_option("--split", o.split, "test | validation");
    }
  };
  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"synth-corpus", "write the synthetic corpus and its manifest"},
      {"featurize", "cache log-mel features of every utterance"},
      {"pretrain-clean", "train the clean reference recognizer"},
      {"train", "train one model kind"},
      {"evaluate", "evaluate checkpoints over clean and noisy conditions"},
      {"ablate", "train and compare all six model kinds"},
      {"dump-embeddings", "write utterance representations as CSV"},
      {"selfcheck", "run gradient and DSP property checks"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : verbs) subs[name] = app.add_subcommand(name, help);
  add(subs["synth-corpus"], {"config", "seed", "out"});
  add(subs["featurize"], {"manifest", "out"});
  add(subs["pretrain-clean"], {"config", "seed", "seeds", "out", "manifest", "fold"});
  add(subs["train"], {"config", "seed", "seeds", "out", "manifest", "enhancer", "model", "snrs",
                      "fold", "reference"});
  add(subs["evaluate"], {"config", "manifest", "enhancer", "snrs", "checkpoint", "out", "split"});
  add(subs["ablate"], {"config", "seeds", "out", "manifest", "enhancer", "snrs", "fold"});
  add(subs["dump-embeddings"],
      {"config", "manifest", "enhancer", "snrs", "checkpoint", "out", "split"});
  add(subs["selfcheck"], {"seed"});

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::string verb;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) verb = name;
  for (const auto& [name, sub] : subs)
    if (sub->parsed())
      if (const CLI::Option* opt = sub->get_option_no_throw("--seed"); opt && opt->count())
        o.seed = seed;

  try {
    return Dispatch(verb, o, args, out, err);
  } catch (const UsageError& e) {
    err << "ERROR (nrser " << verb << ") " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "ERROR (nrser " << verb << ") " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "ERROR (nrser " << verb << ") " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace nrser
