// nrser/spectrogram_tensor.hpp
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

#include "nrser/autograd.hpp"
#include "nrser/dsp.hpp"

namespace nrser {

inline ag::Tensor ToTensor(const Matrix& m) {
  return ag::Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                    std::vector<double>(m.data(), m.data() + m.size()));
}

inline Matrix ToSpectrogram(const ag::Tensor& t) {
  if (t.rank() != 2) throw Error("expected a rank-2 tensor");
  Matrix m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  std::copy(t.values().begin(), t.values().end(), m.data());
  return m;
}

}  // namespace nrser
