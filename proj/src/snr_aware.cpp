// src/snr_aware.cpp
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

#include "nrser/snr_aware.hpp"

#include <algorithm>
#include <cmath>

#include "nrser/spectrogram_tensor.hpp"

namespace nrser {

std::vector<double> SimilarityVector(const Spectrogram& noisy, const Spectrogram& enhanced) {
  if (noisy.rows() != enhanced.rows() || noisy.cols() != enhanced.cols())
    throw DataError("similarity_vector: spectrogram shapes differ");
  std::vector<double> d(static_cast<std::size_t>(noisy.cols()), 0.0);
  for (Eigen::Index f = 0; f < noisy.cols(); ++f) {
    const double nx = noisy.col(f).norm();
    const double ne = enhanced.col(f).norm();
    if (nx == 0.0 || ne == 0.0) continue;
    const double v = noisy.col(f).dot(enhanced.col(f)) / (nx * ne);
    d[static_cast<std::size_t>(f)] = std::clamp(v, -1.0, 1.0);
  }
  return d;
}

SnrAwareParams SnrAwareParams::Init(std::size_t num_bins) {
  return {ag::Parameter(ag::Tensor({num_bins}, 1.0 / static_cast<double>(num_bins))),
          ag::Parameter(ag::Tensor({1}, 0.0))};
}

void SnrAwareParams::Export(std::vector<NamedTensor>& out) const {
  out.push_back({"snr.weight", weight.value()});
  out.push_back({"snr.bias", bias.value()});
}

SnrCoefficient EstimateCoefficient(const std::vector<double>& d, const SnrAwareParams& p) {
  if (d.size() != p.weight.size())
    throw DataError("estimate_coefficient: similarity vector has wrong length");
  const ag::Var dv = ag::Constant(ag::Tensor({1, d.size()}, d));
  const ag::Var w = ag::Reshape(p.weight, {d.size(), 1});
  const ag::Var pre = ag::Add(ag::Reshape(ag::MatMul(dv, w), {1}), p.bias);
  return {pre, ag::Clamp01(pre)};
}

ag::Var Compensate(const ag::Var& noisy, const ag::Var& enhanced, const ag::Var& c) {
  if (noisy.shape() != enhanced.shape())
    throw DataError("compensate: spectrogram shapes differ");
  if (c.size() != 1) throw DataError("compensate: coefficient must be a scalar");
  const ag::Var one_minus_c = ag::AddScalar(ag::Scale(c, -1.0), 1.0);
  return ag::Add(ag::Mul(noisy, c), ag::Mul(enhanced, one_minus_c));
}

Spectrogram Compensate(const Spectrogram& noisy, const Spectrogram& enhanced, double c) {
  const ag::Var out = Compensate(ag::Constant(ToTensor(noisy)), ag::Constant(ToTensor(enhanced)),
                                 ag::Constant(ag::Tensor({1}, c)));
  return ToSpectrogram(out.value());
}

ag::Var LowLevelLoss(const ag::Var& target, const ag::Var& compensated) {
  if (target.shape() != compensated.shape())
    throw DataError("loss_low: spectrogram shapes differ");
  return ag::Mse(target, compensated);
}

}  // namespace nrser
