// nrser/gradcheck.hpp
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

#include <cstdint>
#include <functional>
#include <vector>

#include "nrser/autograd.hpp"

namespace nrser::ag {

struct FiniteDiffOptions {
  double step = 1e-5;
  /// Coordinates sampled uniformly over all parameters; every coordinate is
  /// checked when the total is not larger than this.
  std::size_t max_coordinates = 200;
  std::uint64_t seed = 0;
};

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the gradients of the scalar built by `loss` against central
/// differences. Per coordinate the error is |a - n| / max(1e-8, |a| + |n|).
/// `loss` is re-evaluated for every probe and must rebuild its graph from the
/// current parameter values.
FiniteDiffResult FiniteDiffCheck(const std::function<Var()>& loss,
                                 const std::vector<Var>& params,
                                 const FiniteDiffOptions& opts = {});

}  // namespace nrser::ag
