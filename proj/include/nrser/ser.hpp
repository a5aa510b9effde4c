// nrser/ser.hpp
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

// Emotion recognizer: residual strided CNN over the (normalized) log-mel
// input, frequency averaging, masked attention pooling over time and a
// linear classifier.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nrser/autograd.hpp"
#include "nrser/checkpoint.hpp"
#include "nrser/dsp.hpp"

namespace nrser {

inline constexpr std::size_t kMaxFrames = 500;
inline constexpr std::size_t kNumBlocks = 4;
inline constexpr std::array<std::size_t, kNumBlocks> kEncoderChannels = {32, 64, 128, 256};
inline constexpr std::size_t kKernel = 5;
inline constexpr std::size_t kStride = 2;
inline constexpr std::size_t kRepDim = 256;

struct ConvBlockParams {
  ag::Var weight;           // [Co, Ci, 5, 5]
  ag::Var bias;             // [Co]
  ag::Var shortcut_weight;  // [Co, Ci, 1, 1]
  ag::Var shortcut_bias;    // [Co]
};

struct EncoderParams {
  std::array<ConvBlockParams, kNumBlocks> blocks;
  ag::Var att_weight;  // [256, 256], applied as frames x W
  ag::Var att_bias;    // [256]
  ag::Var att_vector;  // [256, 1]
  // Per-bin input normalization from clean training statistics. Never trained.
  ag::Tensor norm_mean;  // [80]
  ag::Tensor norm_std;   // [80]

  static EncoderParams Init(std::uint64_t seed);
  std::vector<ag::Var> Trainable() const;
};

struct ClassifierParams {
  ag::Var weight;  // [256, 4]
  ag::Var bias;    // [4]

  static ClassifierParams Init(std::uint64_t seed);
};

struct SerParams {
  EncoderParams encoder;
  ClassifierParams classifier;

  static SerParams Init(std::uint64_t seed);
  std::vector<ag::Var> Trainable() const;
  void Export(std::vector<NamedTensor>& out) const;
  /// Reads "ser.*" blocks; `trainable` selects Parameter vs Constant leaves.
  static SerParams Import(const std::vector<NamedTensor>& blocks, bool trainable);
  /// Deep copy whose tensors are constants (frozen reference network).
  SerParams Frozen() const;
  /// Deep copy with fresh trainable leaves.
  SerParams Clone() const;
  void SetNormalization(ag::Tensor mean, ag::Tensor std);
};

/// Number of downsampled frames whose receptive field touches at least one of
/// the first `valid` input frames, for a layer with the given nominal input
/// length.
std::size_t DownsampledValid(std::size_t valid, std::size_t nominal_in);

/// Nominal (padded) time lengths per stage: 500, 250, 125, 63, 32.
std::array<std::size_t, kNumBlocks + 1> NominalTimeLengths();

struct EncoderTrace {
  std::vector<ag::Shape> block_outputs;  // [C, T', F'] per block (computed rows only)
  ag::Var frames;                        // [T', 256] before pooling
  std::vector<bool> frame_mask;
};

/// Encodes the first `x.shape()[0]` real frames of a padded input. Rows past
/// the real frames are treated as masked and never computed; the result is
/// identical to running the full 500-frame input with masked rows zeroed.
ag::Var EncodeValid(const ag::Var& x, const EncoderParams& p, EncoderTrace* trace = nullptr);

enum class EncodePath {
  kTruncated,  // compute real rows only
  kFullMasked  // run all 500 rows, zeroing masked rows after every block
};

/// x: [500, 80] padded input, mask: 500 flags marking real frames (a prefix).
ag::Var Encode(const ag::Var& x, const std::vector<bool>& mask, const EncoderParams& p,
               EncodePath path = EncodePath::kTruncated, EncoderTrace* trace = nullptr);

/// e_t = v^T tanh(W f_t + b); alpha = softmax over unmasked t; sum alpha_t f_t.
ag::Var AttentionPool(const ag::Var& frames, const std::vector<bool>& mask,
                      const ag::Var& weight, const ag::Var& bias, const ag::Var& vector);

/// [256] -> logits [4].
ag::Var Classify(const ag::Var& rep, const ClassifierParams& p);

std::size_t Argmax(const ag::Tensor& logits);

}  // namespace nrser
