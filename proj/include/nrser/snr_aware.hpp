// nrser/snr_aware.hpp
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

// SNR-aware feature compensation. The cosine similarity between matching
// frequency columns of the noisy and enhanced spectrograms is mapped through
// a linear layer and a [0, 1] clamp to a coefficient c, which mixes the two
// spectrograms: compensated = c * noisy + (1 - c) * enhanced.

#pragma once

#include <vector>

#include "nrser/autograd.hpp"
#include "nrser/checkpoint.hpp"
#include "nrser/dsp.hpp"

namespace nrser {

/// d_i = <x_i, e_i> / (|x_i| |e_i|) over frequency columns; 0 when either
/// column has zero norm. Only the rows passed in take part.
std::vector<double> SimilarityVector(const Spectrogram& noisy, const Spectrogram& enhanced);

struct SnrAwareParams {
  ag::Var weight;  // [F]
  ag::Var bias;    // [1]

  /// weight = 1/F, bias = 0: a clean pair (d = 1) starts at c = 1.
  static SnrAwareParams Init(std::size_t num_bins = kNumMelBins);
  std::vector<ag::Var> Trainable() const { return {weight, bias}; }
  void Export(std::vector<NamedTensor>& out) const;
};

struct SnrCoefficient {
  ag::Var pre_clamp;  // c-bar, [1]
  ag::Var value;      // c, [1]
};

SnrCoefficient EstimateCoefficient(const std::vector<double>& d, const SnrAwareParams& p);

/// c * noisy + (1 - c) * enhanced; c is a one-element tensor.
ag::Var Compensate(const ag::Var& noisy, const ag::Var& enhanced, const ag::Var& c);
Spectrogram Compensate(const Spectrogram& noisy, const Spectrogram& enhanced, double c);

/// Mean squared difference over all elements.
ag::Var LowLevelLoss(const ag::Var& target, const ag::Var& compensated);

}  // namespace nrser
