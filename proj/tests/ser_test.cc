// tests/ser_test.cc
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

#include <gtest/gtest.h>

#include <random>

#include "nrser/ser.hpp"

namespace nrser {
namespace {

using ag::Shape;
using ag::Tensor;

Tensor RandomInput(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({frames, kNumMelBins});
  for (double& v : t.values()) v = n(rng);
  return t;
}

// Pads the first `valid` rows of a random input to 500 rows, filling the rest
// with `fill`.
Tensor Padded(const Tensor& real, double fill) {
  Tensor t({kMaxFrames, kNumMelBins}, fill);
  std::copy(real.values().begin(), real.values().end(), t.values().begin());
  return t;
}

std::vector<bool> PrefixMask(std::size_t valid) {
  std::vector<bool> m(kMaxFrames, false);
  std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(valid), true);
  return m;
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

class SerTest : public ::testing::Test {
 protected:
  static const SerParams& Params() {
    static const SerParams p = SerParams::Init(17);
    return p;
  }
};

TEST_F(SerTest, ShapeTraceOfFullInput) {
  EncoderTrace trace;
  const ag::Var h = Encode(ag::Constant(RandomInput(kMaxFrames, 1)), PrefixMask(kMaxFrames),
                           Params().encoder, EncodePath::kTruncated, &trace);
  ASSERT_EQ(trace.block_outputs.size(), 4u);
  EXPECT_EQ(trace.block_outputs[0], (Shape{32, 250, 40}));
  EXPECT_EQ(trace.block_outputs[1], (Shape{64, 125, 20}));
  EXPECT_EQ(trace.block_outputs[2], (Shape{128, 63, 10}));
  EXPECT_EQ(trace.block_outputs[3], (Shape{256, 32, 5}));
  EXPECT_EQ(trace.frames.shape(), (Shape{32, 256}));
  EXPECT_EQ(h.shape(), (Shape{kRepDim}));
  EXPECT_EQ(Classify(h, Params().classifier).shape(), (Shape{kNumEmotions}));
}

TEST(Geometry, NominalLengths) {
  const auto n = NominalTimeLengths();
  EXPECT_EQ(n[0], 500u);
  EXPECT_EQ(n[1], 250u);
  EXPECT_EQ(n[2], 125u);
  EXPECT_EQ(n[3], 63u);
  EXPECT_EQ(n[4], 32u);
}

TEST(Geometry, DownsampledValidMatchesReceptiveFieldCount) {
  // Brute force: output row i reads input rows [i*2 - pad_top, i*2 - pad_top + 4].
  for (std::size_t nominal : {500u, 250u, 125u, 63u, 10u, 7u}) {
    const std::size_t out = (nominal + 1) / 2;
    const std::size_t total_pad = std::max<long>(0, static_cast<long>((out - 1) * 2 + 5) -
                                                        static_cast<long>(nominal));
    const long pad_top = static_cast<long>(total_pad / 2);
    for (std::size_t valid = 1; valid <= nominal; ++valid) {
      std::size_t count = 0;
      for (std::size_t i = 0; i < out; ++i) {
        const long first = static_cast<long>(i) * 2 - pad_top;
        if (first <= static_cast<long>(valid) - 1 && first + 4 >= 0) ++count;
      }
      EXPECT_EQ(DownsampledValid(valid, nominal), count) << nominal << " " << valid;
    }
  }
  EXPECT_EQ(DownsampledValid(0, 500), 0u);
}

TEST_F(SerTest, TruncatedPathEqualsFullMaskedPath) {
  for (std::size_t valid : {98u, 237u, 500u}) {
    const Tensor x = Padded(RandomInput(valid, valid), 0.0);
    const ag::Var a = Encode(ag::Constant(x), PrefixMask(valid), Params().encoder,
                             EncodePath::kTruncated);
    const ag::Var b = Encode(ag::Constant(x), PrefixMask(valid), Params().encoder,
                             EncodePath::kFullMasked);
    EXPECT_LT(MaxAbsDiff(a.value(), b.value()), 1e-10) << valid;
  }
}

TEST_F(SerTest, PaddedFramesDoNotAffectOutput) {
  const Tensor real = RandomInput(150, 5);
  const std::vector<bool> mask = PrefixMask(150);
  for (EncodePath path : {EncodePath::kTruncated, EncodePath::kFullMasked}) {
    const ag::Var a = Encode(ag::Constant(Padded(real, 0.0)), mask, Params().encoder, path);
    const ag::Var b = Encode(ag::Constant(Padded(real, 37.5)), mask, Params().encoder, path);
    EXPECT_EQ(a.value(), b.value());
  }
}

TEST_F(SerTest, EncodeRejectsBadInputs) {
  const auto& enc = Params().encoder;
  EXPECT_THROW(Encode(ag::Constant(RandomInput(400, 1)), PrefixMask(400), enc), DataError);
  EXPECT_THROW(Encode(ag::Constant(RandomInput(500, 1)), PrefixMask(0), enc), DataError);
  std::vector<bool> holes = PrefixMask(100);
  holes[50] = false;
  EXPECT_THROW(Encode(ag::Constant(RandomInput(500, 1)), holes, enc), DataError);
  EXPECT_THROW(EncodeValid(ag::Constant(RandomInput(501, 1)), enc), DataError);
}

TEST(Attention, SingleUnmaskedFrameIsReturned) {
  const SerParams p = SerParams::Init(3);
  const Tensor frames = [] {
    Tensor t({4, kRepDim});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::sin(0.1 * static_cast<double>(i));
    return t;
  }();
  const ag::Var h = AttentionPool(ag::Constant(frames), {false, false, true, false},
                                  p.encoder.att_weight, p.encoder.att_bias, p.encoder.att_vector);
  for (std::size_t d = 0; d < kRepDim; ++d) EXPECT_DOUBLE_EQ(h.value()[d], frames[2 * kRepDim + d]);
}

TEST(Attention, IdenticalFramesReturnThatFrame) {
  const SerParams p = SerParams::Init(4);
  Tensor frames({6, kRepDim});
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t d = 0; d < kRepDim; ++d) frames[t * kRepDim + d] = 0.01 * static_cast<double>(d);
  const ag::Var h = AttentionPool(ag::Constant(frames), std::vector<bool>(6, true),
                                  p.encoder.att_weight, p.encoder.att_bias, p.encoder.att_vector);
  for (std::size_t d = 0; d < kRepDim; ++d) EXPECT_NEAR(h.value()[d], 0.01 * static_cast<double>(d), 1e-14);
}

TEST(Attention, ZeroScoringVectorAveragesUnmaskedFrames) {
  const SerParams p = SerParams::Init(5);
  const Tensor frames = RandomInput(5, 9);  // 5 x 80, reshaped below
  Tensor f({5, kRepDim});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = frames[i % frames.size()] + 0.001 * static_cast<double>(i);
  const std::vector<bool> mask = {true, false, true, true, false};
  const ag::Var h = AttentionPool(ag::Constant(f), mask, p.encoder.att_weight, p.encoder.att_bias,
                                  ag::Constant(Tensor({kRepDim, 1}, 0.0)));
  for (std::size_t d = 0; d < kRepDim; ++d) {
    const double mean = (f[0 * kRepDim + d] + f[2 * kRepDim + d] + f[3 * kRepDim + d]) / 3.0;
    EXPECT_NEAR(h.value()[d], mean, 1e-13);
  }
  EXPECT_THROW(AttentionPool(ag::Constant(f), std::vector<bool>(5, false), p.encoder.att_weight,
                             p.encoder.att_bias, p.encoder.att_vector),
               DataError);
}

TEST(Classifier, ZeroWeightsGiveBias) {
  ClassifierParams c{ag::Constant(Tensor({kRepDim, kNumEmotions}, 0.0)),
                     ag::Constant(Tensor({kNumEmotions}, {0.1, -0.2, 0.3, 0.0}))};
  const ag::Var logits = Classify(ag::Constant(Tensor({kRepDim}, 5.0)), c);
  EXPECT_EQ(logits.value(), Tensor({kNumEmotions}, {0.1, -0.2, 0.3, 0.0}));
  EXPECT_THROW(Classify(ag::Constant(Tensor({10}, 0.0)), c), DataError);
}

TEST(Classifier, ArgmaxIsShiftInvariantAndPicksFirstTie) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor l({4});
    for (double& v : l.values()) v = n(rng);
    Tensor shifted = l;
    for (double& v : shifted.values()) v += 42.0;
    EXPECT_EQ(Argmax(l), Argmax(shifted));
    EXPECT_GE(l[Argmax(l)], *std::max_element(l.values().begin(), l.values().end()));
  }
  EXPECT_EQ(Argmax(Tensor({4}, {1, 3, 3, 0})), 1u);
}

TEST(Params, ExportImportRoundTrip) {
  SerParams p = SerParams::Init(8);
  Tensor mean({kNumMelBins}, -3.0), std({kNumMelBins}, 2.0);
  p.SetNormalization(mean, std);
  std::vector<NamedTensor> blocks;
  p.Export(blocks);
  const SerParams q = SerParams::Import(blocks, true);
  std::vector<NamedTensor> again;
  q.Export(again);
  EXPECT_EQ(ChecksumOf(blocks), ChecksumOf(again));
  EXPECT_EQ(q.encoder.norm_mean, mean);
  for (const ag::Var& v : q.Trainable()) EXPECT_TRUE(v.requires_grad());
  for (const ag::Var& v : SerParams::Import(blocks, false).Trainable()) EXPECT_FALSE(v.requires_grad());

  blocks.pop_back();
  EXPECT_THROW(SerParams::Import(blocks, true), DataError);
  EXPECT_THROW(p.SetNormalization(Tensor({3}, 0.0), Tensor({3}, 1.0)), DataError);
  EXPECT_THROW(p.SetNormalization(mean, Tensor({kNumMelBins}, 0.0)), DataError);
}

TEST(Params, FrozenAndCloneAreIndependentCopies) {
  const SerParams p = SerParams::Init(9);
  const SerParams frozen = p.Frozen();
  SerParams clone = p.Clone();
  for (const ag::Var& v : frozen.Trainable()) EXPECT_FALSE(v.requires_grad());
  clone.classifier.bias.mutable_value()[0] += 1.0;
  EXPECT_NE(clone.classifier.bias.value(), p.classifier.bias.value());
  EXPECT_EQ(frozen.classifier.bias.value(), p.classifier.bias.value());

  // A frozen encoder builds no gradient path.
  const ag::Var h = EncodeValid(ag::Constant(RandomInput(40, 3)), frozen.encoder);
  EXPECT_FALSE(h.requires_grad());
}

TEST(Params, InitIsDeterministicPerSeed) {
  std::vector<NamedTensor> a, b, c;
  SerParams::Init(1).Export(a);
  SerParams::Init(1).Export(b);
  SerParams::Init(2).Export(c);
  EXPECT_EQ(ChecksumOf(a), ChecksumOf(b));
  EXPECT_NE(ChecksumOf(a), ChecksumOf(c));
}

}  // namespace
}  // namespace nrser
