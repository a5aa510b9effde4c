// nrser/bridge.hpp
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

// FiLM-style calibration of the utterance representation conditioned on the
// SNR coefficient: h_cal = (w1 c + b1) * h + (w2 c + b2).

#pragma once

#include <vector>

#include "nrser/autograd.hpp"
#include "nrser/checkpoint.hpp"

namespace nrser {

struct BridgeParams {
  ag::Var scale_weight;  // [256]
  ag::Var scale_bias;    // [256]
  ag::Var shift_weight;  // [256]
  ag::Var shift_bias;    // [256]

  /// scale = 1, shift = 0 for every c.
  static BridgeParams Identity(std::size_t dim = 256);
  std::vector<ag::Var> Trainable() const {
    return {scale_weight, scale_bias, shift_weight, shift_bias};
  }
  void Export(std::vector<NamedTensor>& out) const;
};

ag::Var Calibrate(const ag::Var& h, const ag::Var& c, const BridgeParams& p);

/// Mean squared difference between the reference and calibrated vectors.
ag::Var HighLevelLoss(const ag::Var& reference, const ag::Var& calibrated);

}  // namespace nrser
