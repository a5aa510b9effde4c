// nrser/selfcheck.hpp
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

// Built-in property suites: finite-difference checks for every
// differentiable operation and the full composite loss, plus DSP invariants.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nrser {

struct CheckOutcome {
  std::string name;
  double value = 0;      // measured error
  double threshold = 0;  // pass iff value < threshold
  bool passed = false;
};

/// Central-difference checks (64-bit) of each operation and of the composite
/// loss on a two-utterance batch.
std::vector<CheckOutcome> GradientSuite(std::uint64_t seed = 0);

/// STFT round trip, SNR mixing exactness and compensation endpoints.
std::vector<CheckOutcome> DspSuite(std::uint64_t seed = 0);

}  // namespace nrser
