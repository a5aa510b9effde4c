// src/evalkit.cpp
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

#include "nrser/evalkit.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace nrser {

namespace {

nlohmann::ordered_json MetricsJson(const Metrics& m) {
  nlohmann::ordered_json j;
  j["uar"] = m.uar;
  j["war"] = m.war;
  j["mean_c"] = m.mean_c ? nlohmann::ordered_json(*m.mean_c) : nlohmann::ordered_json();
  return j;
}

// Mean of metrics; mean_c only when every input has one.
Metrics MeanOf(const std::vector<Metrics>& ms) {
  Metrics out;
  if (ms.empty()) return out;
  bool have_c = true;
  double c = 0;
  for (const Metrics& m : ms) {
    out.uar += m.uar;
    out.war += m.war;
    if (m.mean_c)
      c += *m.mean_c;
    else
      have_c = false;
  }
  const double n = static_cast<double>(ms.size());
  out.uar /= n;
  out.war /= n;
  if (have_c) out.mean_c = c / n;
  return out;
}

// Adds "matched" / "unmatched" averages over the SNR conditions of each set.
void AddGroups(std::map<std::string, Metrics>& m) {
  for (const std::string prefix : {"matched", "unmatched"}) {
    std::vector<Metrics> members;
    for (const auto& [name, v] : m)
      if (name.rfind(prefix + "_", 0) == 0) members.push_back(v);
    if (!members.empty()) m[prefix] = MeanOf(members);
  }
}

double Distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<double> Centroid(const std::vector<const EmbeddingRow*>& rows) {
  std::vector<double> c(rows.front()->values.size(), 0.0);
  for (const EmbeddingRow* r : rows)
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += r->values[i];
  for (double& v : c) v /= static_cast<double>(rows.size());
  return c;
}

}  // namespace

std::string Condition::Name() const {
  if (!noise_set) return "clean";
  return std::string(ToString(*noise_set)) + "_" + FormatDouble(snr_db);
}

std::vector<Condition> StandardConditions(const std::vector<double>& snrs, bool matched,
                                          bool unmatched) {
  std::vector<Condition> out{Condition{}};
  for (const auto& [enabled, set] :
       {std::pair{matched, NoiseSet::kMatched}, std::pair{unmatched, NoiseSet::kUnmatched}}) {
    if (!enabled) continue;
    for (double snr : snrs) out.push_back(Condition{set, snr});
  }
  return out;
}

std::vector<EvalSet> BuildEvalSets(CorpusData& data,
                                   const std::vector<const UtteranceRecord*>& utterances,
                                   const std::vector<Condition>& conditions,
                                   const Enhancer* enhancer) {
  if (utterances.empty()) throw DataError("no utterances to evaluate");
  std::vector<EvalSet> sets;
  for (const Condition& cond : conditions) {
    EvalSet set{cond, {}};
    for (const UtteranceRecord* u : utterances) {
      const Waveform& clean = data.Utterance(*u);
      if (!cond.noise_set) {
        set.views.push_back(
            MakeTrainingView(u->id, u->emotion, clean, nullptr, std::nullopt, enhancer));
        continue;
      }
      const auto pool = data.NoisePool(*cond.noise_set, u->session);
      std::mt19937_64 rng(MixSeed(HashString(u->id), HashString(cond.Name())));
      const NoiseRecord* noise = pool[rng() % pool.size()];
      TrainingExample ex = MakeTrainingView(u->id, u->emotion, clean, &data.Noise(*noise),
                                            cond.snr_db, enhancer, rng());
      ex.noise_id = noise->id;
      set.views.push_back(std::move(ex));
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

std::vector<ConditionResult> EvaluateModel(const Model& m, const std::vector<EvalSet>& sets) {
  std::vector<ConditionResult> out;
  for (const EvalSet& set : sets) {
    ConditionResult r;
    r.condition = set.condition.Name();
    double c = 0;
    for (const TrainingExample& ex : set.views) {
      const ForwardOutput f = Forward(m, ex.noisy(), ex.enhanced());
      r.cm.Add(static_cast<std::size_t>(ex.label()), Argmax(f.logits.value()));
      if (f.coefficient.defined()) c += f.coefficient.item();
    }
    r.uar = Uar(r.cm);
    r.war = War(r.cm);
    if (IsCompensating(m.kind)) r.mean_c = c / static_cast<double>(set.views.size());
    out.push_back(std::move(r));
  }
  return out;
}

EvalReport Summarize(std::string model, std::vector<EvalRun> runs) {
  EvalReport rep;
  rep.model = std::move(model);
  if (runs.empty()) throw DataError("no evaluation runs to summarize");
  for (const ConditionResult& r : runs.front().results) rep.conditions.push_back(r.condition);
  // seed -> condition -> per-fold metrics
  std::map<std::uint64_t, std::map<std::string, std::vector<Metrics>>> grouped;
  for (const EvalRun& run : runs) {
    if (run.results.size() != rep.conditions.size())
      throw DataError("evaluation runs disagree on their conditions");
    for (std::size_t i = 0; i < run.results.size(); ++i) {
      const ConditionResult& r = run.results[i];
      if (r.condition != rep.conditions[i])
        throw DataError("evaluation runs disagree on their conditions");
      grouped[run.seed][r.condition].push_back(Metrics{r.uar, r.war, r.mean_c});
    }
  }
  std::map<std::string, std::vector<Metrics>> across;
  for (const auto& [seed, conds] : grouped) {
    auto& per_seed = rep.by_seed[seed];
    for (const auto& [name, folds] : conds) per_seed[name] = MeanOf(folds);
    for (const auto& [name, m] : per_seed) across[name].push_back(m);
    AddGroups(per_seed);
  }
  for (const auto& [name, ms] : across) rep.summary[name] = MeanOf(ms);
  AddGroups(rep.summary);
  rep.runs = std::move(runs);
  return rep;
}

std::string EvalReport::ToJson() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["conditions"] = conditions;
  j["runs"] = nlohmann::ordered_json::array();
  for (const EvalRun& run : runs) {
    nlohmann::ordered_json r;
    r["label"] = run.label;
    r["seed"] = run.seed;
    r["fold"] = run.fold;
    r["results"] = nlohmann::ordered_json::object();
    for (const ConditionResult& c : run.results) {
      nlohmann::ordered_json cj = MetricsJson(Metrics{c.uar, c.war, c.mean_c});
      nlohmann::ordered_json cm = nlohmann::ordered_json::array();
      for (std::size_t a = 0; a < kNumEmotions; ++a) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t b = 0; b < kNumEmotions; ++b) row.push_back(c.cm.at(a, b));
        cm.push_back(row);
      }
      cj["confusion"] = cm;
      r["results"][c.condition] = cj;
    }
    j["runs"].push_back(r);
  }
  j["by_seed"] = nlohmann::ordered_json::object();
  for (const auto& [seed, conds] : by_seed) {
    nlohmann::ordered_json s = nlohmann::ordered_json::object();
    for (const auto& [name, m] : conds) s[name] = MetricsJson(m);
    j["by_seed"][std::to_string(seed)] = s;
  }
  j["summary"] = nlohmann::ordered_json::object();
  for (const auto& [name, m] : summary) j["summary"][name] = MetricsJson(m);
  return j.dump(2) + "\n";
}

std::vector<EmbeddingRow> ComputeEmbeddings(const Model& m, const std::vector<EvalSet>& sets) {
  std::vector<EmbeddingRow> rows;
  for (const EvalSet& set : sets) {
    const std::string snr =
        set.condition.noise_set ? FormatDouble(set.condition.snr_db) : std::string("clean");
    for (const TrainingExample& ex : set.views) {
      const ForwardOutput f = Forward(m, ex.noisy(), ex.enhanced());
      const auto v = f.calibrated.value().values();
      rows.push_back({ex.id(), ex.label(), set.condition.Name(), snr, {v.begin(), v.end()}});
    }
  }
  return rows;
}

std::string EmbeddingsToCsv(const std::vector<EmbeddingRow>& rows) {
  std::ostringstream os;
  const std::size_t dim = rows.empty() ? kRepDim : rows.front().values.size();
  os << "id,emotion,condition,snr";
  for (std::size_t i = 0; i < dim; ++i) os << ",e" << i;
  os << "\n";
  for (const EmbeddingRow& r : rows) {
    if (r.values.size() != dim) throw DataError("embedding rows differ in dimension");
    os << r.id << "," << ToString(r.emotion) << "," << r.condition << "," << r.snr;
    for (double v : r.values) os << "," << FormatDouble(v);
    os << "\n";
  }
  return os.str();
}

std::vector<EmbeddingRow> EmbeddingsFromCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,emotion,condition,snr", 0) != 0)
    throw DataError("embedding CSV is missing its header");
  std::vector<EmbeddingRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    if (fields.size() < 5) throw DataError("embedding CSV row has too few columns");
    EmbeddingRow r;
    r.id = fields[0];
    r.emotion = EmotionFromString(fields[1]);
    r.condition = fields[2];
    r.snr = fields[3];
    for (std::size_t i = 4; i < fields.size(); ++i) {
      double v = 0;
      const auto [ptr, ec] =
          std::from_chars(fields[i].data(), fields[i].data() + fields[i].size(), v);
      if (ec != std::errc() || ptr != fields[i].data() + fields[i].size())
        throw DataError("embedding CSV has a malformed value");
      r.values.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

double CentroidShift(const std::vector<EmbeddingRow>& rows) {
  if (rows.empty()) throw DataError("no embeddings");
  std::map<std::pair<Emotion, std::string>, std::vector<const EmbeddingRow*>> by_cell;
  std::map<Emotion, std::vector<const EmbeddingRow*>> by_class;
  std::set<std::string> conditions;
  for (const EmbeddingRow& r : rows) {
    by_cell[{r.emotion, r.condition}].push_back(&r);
    by_class[r.emotion].push_back(&r);
    conditions.insert(r.condition);
  }
  if (conditions.size() < 2 || by_class.size() < 2)
    throw DataError("centroid shift needs at least two conditions and two emotions");
  double within = 0;
  std::size_t n_within = 0;
  for (const auto& [emotion, members] : by_class) {
    std::vector<std::vector<double>> cents;
    for (const std::string& cond : conditions) {
      auto it = by_cell.find({emotion, cond});
      if (it != by_cell.end()) cents.push_back(Centroid(it->second));
    }
    for (std::size_t a = 0; a < cents.size(); ++a)
      for (std::size_t b = a + 1; b < cents.size(); ++b) {
        within += Distance(cents[a], cents[b]);
        ++n_within;
      }
  }
  std::vector<std::vector<double>> class_cents;
  for (const auto& [emotion, members] : by_class) class_cents.push_back(Centroid(members));
  double between = 0;
  std::size_t n_between = 0;
  for (std::size_t a = 0; a < class_cents.size(); ++a)
    for (std::size_t b = a + 1; b < class_cents.size(); ++b) {
      between += Distance(class_cents[a], class_cents[b]);
      ++n_between;
    }
  between /= static_cast<double>(n_between);
  if (n_within == 0 || !(between > 0)) throw DataError("centroid shift is undefined");
  return within / static_cast<double>(n_within) / between;
}

}  // namespace nrser
