// nrser/metrics.hpp
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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nrser/common.hpp"
#include "nrser/corpus.hpp"

namespace nrser {

/// 4x4 counts; rows are reference labels, columns predictions.
class ConfusionMatrix {
 public:
  void Add(std::size_t reference, std::size_t predicted, std::uint64_t count = 1);
  void Merge(const ConfusionMatrix& other);
  std::uint64_t at(std::size_t reference, std::size_t predicted) const {
    return counts_[reference][predicted];
  }
  std::uint64_t Support(std::size_t reference) const;
  std::uint64_t Total() const;
  std::uint64_t Correct() const;

 private:
  std::array<std::array<std::uint64_t, kNumEmotions>, kNumEmotions> counts_{};
};

/// Mean per-class recall. Throws DataError when a class has no support.
double Uar(const ConfusionMatrix& cm);
/// Overall accuracy; 0 for an empty matrix.
double War(const ConfusionMatrix& cm);

/// One leave-one-speaker-out fold: four sessions train, the held-out
/// session's first speaker validates and its second speaker tests (roles
/// swapped in the companion fold).
struct FoldSplit {
  int index = 0;
  std::vector<std::string> train_sessions;
  std::string validation_speaker;
  std::string test_speaker;

  std::vector<const UtteranceRecord*> TrainUtterances(const Manifest& m) const;
  std::vector<const UtteranceRecord*> SpeakerUtterances(const Manifest& m,
                                                        const std::string& speaker) const;
};

/// Two folds per held-out session, in session order. Requires >= 2 sessions
/// and exactly two speakers in every session.
std::vector<FoldSplit> LosoSplits(const Manifest& m);

}  // namespace nrser
