// src/gradcheck.cpp
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

#include "nrser/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nrser::ag {

FiniteDiffResult FiniteDiffCheck(const std::function<Var()>& loss,
                                 const std::vector<Var>& params,
                                 const FiniteDiffOptions& opts) {
  std::vector<Var> ps = params;
  for (Var& p : ps) p.ZeroGrad();
  {
    const Var l = loss();
    if (!std::isfinite(l.item())) throw NumericalError("finite_diff_check: non-finite loss");
    Backward(l);
  }
  std::vector<Tensor> analytic;
  std::size_t total = 0;
  for (const Var& p : ps) {
    analytic.push_back(p.has_grad() ? p.grad() : Tensor(p.shape(), 0.0));
    total += p.size();
  }

  // (parameter, element) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  if (total <= opts.max_coordinates) {
    for (std::size_t k = 0; k < ps.size(); ++k)
      for (std::size_t i = 0; i < ps[k].size(); ++i) coords.emplace_back(k, i);
  } else {
    std::mt19937_64 rng(opts.seed);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t c = 0; c < opts.max_coordinates; ++c) {
      std::size_t flat = pick(rng), k = 0;
      while (flat >= ps[k].size()) flat -= ps[k++].size();
      coords.emplace_back(k, flat);
    }
  }

  FiniteDiffResult result;
  for (auto [k, i] : coords) {
    double& x = ps[k].mutable_value()[i];
    const double saved = x;
    x = saved + opts.step;
    const double up = loss().item();
    x = saved - opts.step;
    const double down = loss().item();
    x = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericalError("finite_diff_check: non-finite loss during probe");
    const double numeric = (up - down) / (2.0 * opts.step);
    const double a = analytic[k][i];
    const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
    ++result.coordinates;
  }
  for (Var& p : ps) p.ZeroGrad();
  return result;
}

}  // namespace nrser::ag
