// src/pipeline.cpp
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

#include "nrser/pipeline.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "json.hpp"

namespace nrser {

namespace {

std::string Join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " " : "") + parts[i];
  return out;
}

void Log(std::ostream* log, const std::string& msg) {
  if (log) *log << "LOG (nrser) " << msg << std::endl;
}

}  // namespace

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  io::WriteFile(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string RunDirName(ModelKind kind, std::uint64_t seed, int fold) {
  return std::string(ToString(kind)) + "_seed" + std::to_string(seed) + "_fold" +
         std::to_string(fold);
}

const FoldSplit& FoldAt(const std::vector<FoldSplit>& folds, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= folds.size())
    throw UsageError("fold " + std::to_string(index) + " out of range (corpus has " +
                     std::to_string(folds.size()) + " folds)");
  return folds[static_cast<std::size_t>(index)];
}

std::vector<const UtteranceRecord*> SplitUtterances(const Manifest& m, const FoldSplit& fold,
                                                    const std::string& split) {
  if (split == "test") return fold.SpeakerUtterances(m, fold.test_speaker);
  if (split == "validation") return fold.SpeakerUtterances(m, fold.validation_speaker);
  throw UsageError("split must be 'test' or 'validation'");
}

TrainResult RunTraining(const RunRequest& req, CorpusData& data, std::ostream* log) {
  TrainConfig cfg = req.config;
  cfg.Validate();
  const std::vector<FoldSplit> folds = LosoSplits(data.manifest());
  const FoldSplit& fold = FoldAt(folds, req.fold);

  std::optional<Model> reference;
  std::uint64_t reference_checksum = 0;
  if (IsCompensating(cfg.model)) {
    if (req.reference_path.empty())
      throw UsageError("model kind '" + std::string(ToString(cfg.model)) +
                       "' requires a frozen clean checkpoint (--reference or config key "
                       "'reference')");
    reference = Model::Load(req.reference_path);
    if (reference->kind != ModelKind::kBaselineC)
      throw DataError("reference checkpoint must be a baseline_c model");
    if (reference->fold != req.fold)
      throw DataError("reference checkpoint was trained on fold " +
                      std::to_string(reference->fold) + ", run uses fold " +
                      std::to_string(req.fold));
    reference_checksum = ChecksumOf(reference->Export());
    cfg.reference = req.reference_path.string();
  }

  std::filesystem::create_directories(req.run_dir);
  const std::string manifest_text = ManifestToJson(data.manifest());
  WriteTextFile(req.run_dir / "config.txt", FormatTrainConfig(cfg));
  WriteTextFile(req.run_dir / "seed.txt", std::to_string(req.seed) + "\n");
  WriteTextFile(req.run_dir / "fold.txt", std::to_string(req.fold) + "\n");
  WriteTextFile(req.run_dir / "version.txt", std::string(Version()) + "\n");
  WriteTextFile(req.run_dir / "command.txt", Join(req.command) + "\n");
  WriteTextFile(req.run_dir / "manifest.txt",
                req.manifest_path.string() + "\n" + std::to_string(HashString(manifest_text)) +
                    "\n");

  std::ofstream train_log(req.run_dir / "train_log.jsonl", std::ios::binary);
  if (!train_log) throw DataError("cannot write '" + (req.run_dir / "train_log.jsonl").string() + "'");
  const std::string tag = RunDirName(cfg.model, req.seed, req.fold);
  Log(log, tag + ": training");
  TrainResult result =
      Train(cfg, req.seed, fold, data, reference ? &*reference : nullptr,
            [&](const EpochRecord& r) {
              train_log << r.ToJson() << "\n";
              train_log.flush();
              if (r.split == "validation")
                Log(log, tag + ": epoch " + std::to_string(r.epoch) + " validation UAR " +
                             Fixed(r.uar, 4) + " loss " + Fixed(r.loss_total, 4));
            });
  result.model.seed = req.seed;
  result.model.Save(req.run_dir / "model.ckpt");

  nlohmann::ordered_json summary;
  summary["model"] = std::string(ToString(cfg.model));
  summary["seed"] = req.seed;
  summary["fold"] = req.fold;
  summary["best_epoch"] = result.best_epoch;
  summary["best_validation_uar"] = result.best_validation_uar;
  summary["initial_validation_uar"] = result.initial_validation_uar;
  summary["checkpoint_checksum"] = ChecksumOf(result.model.Export());
  if (reference) {
    summary["reference_checksum"] = reference_checksum;
    summary["reference_checksum_after"] = ChecksumOf(reference->Export());
  }
  if (UsesEnhancer(cfg.model)) summary["enhancer_checksum"] = MakeEnhancer(cfg.enhancer)->Checksum();
  WriteTextFile(req.run_dir / "summary.json", summary.dump(2) + "\n");
  Log(log, tag + ": selected epoch " + std::to_string(result.best_epoch) + " (validation UAR " +
               Fixed(result.best_validation_uar, 4) + ")");
  return result;
}

EvalReport EvaluateCheckpoints(const std::vector<std::filesystem::path>& checkpoints,
                               CorpusData& data, const std::vector<Condition>& conditions,
                               const std::string& enhancer_name, const std::string& split) {
  if (checkpoints.empty()) throw UsageError("no checkpoints to evaluate");
  const std::vector<FoldSplit> folds = LosoSplits(data.manifest());
  std::unique_ptr<Enhancer> enhancer = MakeEnhancer(enhancer_name);
  std::map<int, std::vector<EvalSet>> sets_by_fold;
  std::vector<EvalRun> runs;
  std::string kind;
  for (const auto& path : checkpoints) {
    const Model m = Model::Load(path);
    if (kind.empty()) kind = std::string(ToString(m.kind));
    if (kind != ToString(m.kind)) throw UsageError("checkpoints mix model kinds");
    auto it = sets_by_fold.find(m.fold);
    if (it == sets_by_fold.end()) {
      const FoldSplit& fold = FoldAt(folds, m.fold);
      it = sets_by_fold
               .emplace(m.fold, BuildEvalSets(data, SplitUtterances(data.manifest(), fold, split),
                                              conditions, enhancer.get()))
               .first;
    }
    runs.push_back({path.string(), m.seed, m.fold, EvaluateModel(m, it->second)});
  }
  return Summarize(kind, std::move(runs));
}

std::string ComparisonTable(const std::map<ModelKind, EvalReport>& reports,
                            const std::vector<double>& snrs) {
  std::ostringstream os;
  os << "| model | clean UAR | matched UAR | unmatched UAR | clean WAR | matched WAR |";
  for (double s : snrs) os << " matched " << FormatDouble(s) << " dB |";
  for (double s : snrs) os << " c@" << FormatDouble(s) << " dB |";
  os << "\n|---|---|---|---|---|---|";
  for (std::size_t i = 0; i < 2 * snrs.size(); ++i) os << "---|";
  os << "\n";
  auto cell = [](const std::map<std::string, Metrics>& m, const std::string& key, bool war) {
    auto it = m.find(key);
    if (it == m.end()) return std::string("-");
    return Fixed(100.0 * (war ? it->second.war : it->second.uar), 2);
  };
  for (const auto& [kind, rep] : reports) {
    const auto& s = rep.summary;
    os << "| " << ToString(kind) << " | " << cell(s, "clean", false) << " | "
       << cell(s, "matched", false) << " | " << cell(s, "unmatched", false) << " | "
       << cell(s, "clean", true) << " | " << cell(s, "matched", true) << " |";
    for (double snr : snrs) os << " " << cell(s, "matched_" + FormatDouble(snr), false) << " |";
    for (double snr : snrs) {
      auto it = s.find("matched_" + FormatDouble(snr));
      os << " " << (it != s.end() && it->second.mean_c ? Fixed(*it->second.mean_c, 3) : "-")
         << " |";
    }
    os << "\n";
  }
  return os.str();
}

AblationResult RunAblation(const AblationOptions& opts, CorpusData& data, std::ostream* log) {
  opts.config.Validate();
  const std::vector<FoldSplit> folds = LosoSplits(data.manifest());
  for (int f : opts.config.folds) FoldAt(folds, f);
  const std::vector<Condition> conditions = StandardConditions(opts.config.snrs);
  std::unique_ptr<Enhancer> enhancer = MakeEnhancer(opts.config.enhancer);

  AblationResult result;
  std::map<ModelKind, std::vector<EvalRun>> runs;
  for (int f : opts.config.folds) {
    const FoldSplit& fold = FoldAt(folds, f);
    const std::vector<EvalSet> sets = BuildEvalSets(
        data, SplitUtterances(data.manifest(), fold, "test"), conditions, enhancer.get());
    for (std::uint64_t seed : opts.config.seeds) {
      std::filesystem::path reference_path;
      for (ModelKind kind : kAllModelKinds) {
        RunRequest req;
        req.config = opts.config;
        req.config.model = kind;
        req.config.seeds = {seed};
        req.config.folds = {f};
        req.seed = seed;
        req.fold = f;
        req.manifest_path = opts.manifest_path;
        req.run_dir = opts.out_dir / "runs" / RunDirName(kind, seed, f);
        req.reference_path = IsCompensating(kind) ? reference_path : std::filesystem::path();
        req.command = opts.command;
        const TrainResult tr = RunTraining(req, data, log);
        if (kind == ModelKind::kBaselineC) reference_path = req.run_dir / "model.ckpt";
        result.run_dirs.push_back(req.run_dir);
        Model selected = tr.model;
        selected.seed = seed;
        runs[kind].push_back(
            {(req.run_dir / "model.ckpt").string(), seed, f, EvaluateModel(selected, sets)});
      }
    }
  }

  std::filesystem::create_directories(opts.out_dir / "reports");
  nlohmann::ordered_json comparison = nlohmann::ordered_json::object();
  for (auto& [kind, kind_runs] : runs) {
    EvalReport rep = Summarize(std::string(ToString(kind)), std::move(kind_runs));
    WriteTextFile(opts.out_dir / "reports" / (std::string(ToString(kind)) + ".json"),
                  rep.ToJson());
    comparison[std::string(ToString(kind))] =
        nlohmann::ordered_json::parse(rep.ToJson())["summary"];
    result.reports.emplace(kind, std::move(rep));
  }
  result.table = ComparisonTable(result.reports, opts.config.snrs);
  WriteTextFile(opts.out_dir / "comparison.md", result.table);
  WriteTextFile(opts.out_dir / "comparison.json", comparison.dump(2) + "\n");
  WriteTextFile(opts.out_dir / "config.txt", FormatTrainConfig(opts.config));
  WriteTextFile(opts.out_dir / "version.txt", std::string(Version()) + "\n");
  WriteTextFile(opts.out_dir / "command.txt", Join(opts.command) + "\n");
  return result;
}

}  // namespace nrser
