// src/metrics.cpp
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

#include "nrser/metrics.hpp"

#include <algorithm>
#include <map>

namespace nrser {

void ConfusionMatrix::Add(std::size_t reference, std::size_t predicted, std::uint64_t count) {
  if (reference >= kNumEmotions || predicted >= kNumEmotions)
    throw DataError("confusion matrix index out of range");
  counts_[reference][predicted] += count;
}

void ConfusionMatrix::Merge(const ConfusionMatrix& other) {
  for (std::size_t r = 0; r < kNumEmotions; ++r)
    for (std::size_t c = 0; c < kNumEmotions; ++c) counts_[r][c] += other.counts_[r][c];
}

std::uint64_t ConfusionMatrix::Support(std::size_t reference) const {
  std::uint64_t s = 0;
  for (auto v : counts_.at(reference)) s += v;
  return s;
}

std::uint64_t ConfusionMatrix::Total() const {
  std::uint64_t s = 0;
  for (std::size_t r = 0; r < kNumEmotions; ++r) s += Support(r);
  return s;
}

std::uint64_t ConfusionMatrix::Correct() const {
  std::uint64_t s = 0;
  for (std::size_t r = 0; r < kNumEmotions; ++r) s += counts_[r][r];
  return s;
}

double Uar(const ConfusionMatrix& cm) {
  double sum = 0.0;
  for (std::size_t r = 0; r < kNumEmotions; ++r) {
    const std::uint64_t support = cm.Support(r);
    if (support == 0)
      throw DataError("UAR undefined: class '" +
                      std::string(ToString(static_cast<Emotion>(r))) + "' has no support");
    sum += static_cast<double>(cm.at(r, r)) / static_cast<double>(support);
  }
  return sum / kNumEmotions;
}

double War(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.Total();
  return total == 0 ? 0.0 : static_cast<double>(cm.Correct()) / static_cast<double>(total);
}

std::vector<const UtteranceRecord*> FoldSplit::TrainUtterances(const Manifest& m) const {
  std::vector<const UtteranceRecord*> out;
  for (const auto& u : m.utterances)
    if (std::find(train_sessions.begin(), train_sessions.end(), u.session) != train_sessions.end())
      out.push_back(&u);
  return out;
}

std::vector<const UtteranceRecord*> FoldSplit::SpeakerUtterances(
    const Manifest& m, const std::string& speaker) const {
  std::vector<const UtteranceRecord*> out;
  for (const auto& u : m.utterances)
    if (u.speaker == speaker) out.push_back(&u);
  return out;
}

std::vector<FoldSplit> LosoSplits(const Manifest& m) {
  m.Validate(false);
  const std::vector<std::string> sessions = m.Sessions();
  if (sessions.size() < 2) throw DataError("LOSO requires at least two sessions");
  std::vector<FoldSplit> folds;
  for (const std::string& held_out : sessions) {
    const std::vector<std::string> speakers = m.SpeakersOf(held_out);
    if (speakers.size() != 2)
      throw DataError("session '" + held_out + "' must have exactly two speakers");
    std::vector<std::string> train;
    for (const auto& s : sessions)
      if (s != held_out) train.push_back(s);
    for (int role = 0; role < 2; ++role) {
      FoldSplit f;
      f.index = static_cast<int>(folds.size());
      f.train_sessions = train;
      f.validation_speaker = speakers[role];
      f.test_speaker = speakers[1 - role];
      folds.push_back(std::move(f));
    }
  }
  return folds;
}

}  // namespace nrser
