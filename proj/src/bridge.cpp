// src/bridge.cpp
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

#include "nrser/bridge.hpp"

namespace nrser {

BridgeParams BridgeParams::Identity(std::size_t dim) {
  return {ag::Parameter(ag::Tensor({dim}, 0.0)), ag::Parameter(ag::Tensor({dim}, 1.0)),
          ag::Parameter(ag::Tensor({dim}, 0.0)), ag::Parameter(ag::Tensor({dim}, 0.0))};
}

void BridgeParams::Export(std::vector<NamedTensor>& out) const {
  out.push_back({"bridge.scale.weight", scale_weight.value()});
  out.push_back({"bridge.scale.bias", scale_bias.value()});
  out.push_back({"bridge.shift.weight", shift_weight.value()});
  out.push_back({"bridge.shift.bias", shift_bias.value()});
}

ag::Var Calibrate(const ag::Var& h, const ag::Var& c, const BridgeParams& p) {
  if (c.size() != 1) throw DataError("calibrate: coefficient must be a scalar");
  if (h.shape() != p.scale_weight.shape())
    throw DataError("calibrate: representation has shape " + ag::ShapeToString(h.shape()));
  const ag::Var scale = ag::Add(ag::Mul(p.scale_weight, c), p.scale_bias);
  const ag::Var shift = ag::Add(ag::Mul(p.shift_weight, c), p.shift_bias);
  return ag::Add(ag::Mul(h, scale), shift);
}

ag::Var HighLevelLoss(const ag::Var& reference, const ag::Var& calibrated) {
  if (reference.shape() != calibrated.shape())
    throw DataError("loss_high: representation dimensions differ");
  return ag::Mse(reference, calibrated);
}

}  // namespace nrser
