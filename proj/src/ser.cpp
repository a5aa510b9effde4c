// src/ser.cpp
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

#include "nrser/ser.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace nrser {

namespace {

ag::Tensor UniformTensor(ag::Shape shape, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  ag::Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

ag::Var He(ag::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  return ag::Parameter(UniformTensor(std::move(shape), std::sqrt(6.0 / fan_in), rng));
}

ag::Var Xavier(ag::Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return ag::Parameter(
      UniformTensor(std::move(shape), std::sqrt(6.0 / (fan_in + fan_out)), rng));
}

ag::Var Zeros(ag::Shape shape) { return ag::Parameter(ag::Tensor(std::move(shape), 0.0)); }

template <typename Fn>
void ForEachNamed(const SerParams& p, Fn&& fn) {
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const std::string prefix = "ser.block" + std::to_string(b) + ".";
    const auto& blk = p.encoder.blocks[b];
    fn(prefix + "conv.weight", blk.weight);
    fn(prefix + "conv.bias", blk.bias);
    fn(prefix + "shortcut.weight", blk.shortcut_weight);
    fn(prefix + "shortcut.bias", blk.shortcut_bias);
  }
  fn("ser.attention.weight", p.encoder.att_weight);
  fn("ser.attention.bias", p.encoder.att_bias);
  fn("ser.attention.vector", p.encoder.att_vector);
  fn("ser.classifier.weight", p.classifier.weight);
  fn("ser.classifier.bias", p.classifier.bias);
}

ag::Var ConstantMask(const ag::Shape& shape, std::size_t valid_rows, std::size_t row_axis) {
  ag::Tensor t(shape, 0.0);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < row_axis; ++i) outer *= shape[i];
  for (std::size_t i = row_axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t rows = shape[row_axis];
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < std::min(valid_rows, rows); ++r)
      for (std::size_t i = 0; i < inner; ++i) t[(o * rows + r) * inner + i] = 1.0;
  return ag::Constant(std::move(t));
}

ag::Var Normalize(const ag::Var& x, const EncoderParams& p) {
  if (p.norm_mean.size() != kNumMelBins || p.norm_std.size() != kNumMelBins)
    throw Error("encoder normalization statistics are not set");
  ag::Tensor inv(p.norm_std.shape());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / p.norm_std[i];
  return ag::Mul(ag::Sub(x, ag::Constant(p.norm_mean)), ag::Constant(std::move(inv)));
}

}  // namespace

EncoderParams EncoderParams::Init(std::uint64_t seed) {
  std::mt19937_64 rng(MixSeed(seed, 0xe7c));
  EncoderParams p;
  std::size_t in_ch = 1;
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const std::size_t out_ch = kEncoderChannels[b];
    p.blocks[b].weight = He({out_ch, in_ch, kKernel, kKernel}, in_ch * kKernel * kKernel, rng);
    p.blocks[b].bias = Zeros({out_ch});
    p.blocks[b].shortcut_weight = He({out_ch, in_ch, 1, 1}, in_ch, rng);
    p.blocks[b].shortcut_bias = Zeros({out_ch});
    in_ch = out_ch;
  }
  p.att_weight = Xavier({kRepDim, kRepDim}, kRepDim, kRepDim, rng);
  p.att_bias = Zeros({kRepDim});
  p.att_vector = Xavier({kRepDim, 1}, kRepDim, 1, rng);
  p.norm_mean = ag::Tensor({kNumMelBins}, 0.0);
  p.norm_std = ag::Tensor({kNumMelBins}, 1.0);
  return p;
}

std::vector<ag::Var> EncoderParams::Trainable() const {
  std::vector<ag::Var> out;
  for (const auto& b : blocks) {
    out.push_back(b.weight);
    out.push_back(b.bias);
    out.push_back(b.shortcut_weight);
    out.push_back(b.shortcut_bias);
  }
  out.push_back(att_weight);
  out.push_back(att_bias);
  out.push_back(att_vector);
  return out;
}

ClassifierParams ClassifierParams::Init(std::uint64_t seed) {
  std::mt19937_64 rng(MixSeed(seed, 0xc1a));
  return {Xavier({kRepDim, kNumEmotions}, kRepDim, kNumEmotions, rng), Zeros({kNumEmotions})};
}

SerParams SerParams::Init(std::uint64_t seed) {
  return {EncoderParams::Init(seed), ClassifierParams::Init(seed)};
}

std::vector<ag::Var> SerParams::Trainable() const {
  std::vector<ag::Var> out = encoder.Trainable();
  out.push_back(classifier.weight);
  out.push_back(classifier.bias);
  return out;
}

void SerParams::Export(std::vector<NamedTensor>& out) const {
  ForEachNamed(*this, [&](const std::string& name, const ag::Var& v) {
    out.push_back({name, v.value()});
  });
  out.push_back({"ser.norm.mean", encoder.norm_mean});
  out.push_back({"ser.norm.std", encoder.norm_std});
}

SerParams SerParams::Import(const std::vector<NamedTensor>& blocks, bool trainable) {
  std::map<std::string, const ag::Tensor*> by_name;
  for (const auto& b : blocks) by_name[b.name] = &b.value;
  const auto get = [&](const std::string& name) -> const ag::Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint is missing block '" + name + "'");
    return *it->second;
  };
  SerParams p = SerParams::Init(0);
  const auto load = [&](const std::string& name, ag::Var& v) {
    const ag::Tensor& t = get(name);
    if (t.shape() != v.shape())
      throw DataError("checkpoint block '" + name + "' has shape " + ag::ShapeToString(t.shape()) +
                      ", expected " + ag::ShapeToString(v.shape()));
    v = trainable ? ag::Parameter(t) : ag::Constant(t);
  };
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const std::string prefix = "ser.block" + std::to_string(b) + ".";
    load(prefix + "conv.weight", p.encoder.blocks[b].weight);
    load(prefix + "conv.bias", p.encoder.blocks[b].bias);
    load(prefix + "shortcut.weight", p.encoder.blocks[b].shortcut_weight);
    load(prefix + "shortcut.bias", p.encoder.blocks[b].shortcut_bias);
  }
  load("ser.attention.weight", p.encoder.att_weight);
  load("ser.attention.bias", p.encoder.att_bias);
  load("ser.attention.vector", p.encoder.att_vector);
  load("ser.classifier.weight", p.classifier.weight);
  load("ser.classifier.bias", p.classifier.bias);
  p.SetNormalization(get("ser.norm.mean"), get("ser.norm.std"));
  return p;
}

SerParams SerParams::Frozen() const {
  std::vector<NamedTensor> blocks;
  Export(blocks);
  return Import(blocks, false);
}

SerParams SerParams::Clone() const {
  std::vector<NamedTensor> blocks;
  Export(blocks);
  return Import(blocks, true);
}

void SerParams::SetNormalization(ag::Tensor mean, ag::Tensor std) {
  if (mean.size() != kNumMelBins || std.size() != kNumMelBins)
    throw DataError("normalization statistics must have 80 entries");
  for (double s : std.values())
    if (!(s > 0.0)) throw DataError("normalization std must be positive");
  encoder.norm_mean = std::move(mean);
  encoder.norm_std = std::move(std);
}

std::size_t DownsampledValid(std::size_t valid, std::size_t nominal_in) {
  if (valid == 0) return 0;
  const ag::ConvGeometry g = ag::SameGeometry(nominal_in, 1, kKernel, kStride);
  return std::min(g.out_h, (valid - 1 + g.pad_top) / kStride + 1);
}

std::array<std::size_t, kNumBlocks + 1> NominalTimeLengths() {
  std::array<std::size_t, kNumBlocks + 1> out{};
  out[0] = kMaxFrames;
  for (std::size_t b = 0; b < kNumBlocks; ++b) out[b + 1] = (out[b] + kStride - 1) / kStride;
  return out;
}

namespace {

struct Stage {
  ag::Var x;
  std::size_t nominal_h, nominal_w, valid;
};

// One residual block; `full` keeps the nominal row count and zeroes the
// masked rows of the output.
Stage RunBlock(const Stage& in, const ConvBlockParams& blk, bool full) {
  ag::ConvGeometry g = ag::SameGeometry(in.nominal_h, in.nominal_w, kKernel, kStride);
  ag::ConvGeometry gs = ag::SameGeometry(in.nominal_h, in.nominal_w, 1, kStride);
  const std::size_t out_valid = DownsampledValid(in.valid, in.nominal_h);
  const std::size_t nominal_out = g.out_h;
  if (!full) g.out_h = gs.out_h = out_valid;
  ag::Var y = ag::Add(ag::Relu(ag::Conv2d(in.x, blk.weight, blk.bias, g)),
                      ag::Conv2d(in.x, blk.shortcut_weight, blk.shortcut_bias, gs));
  if (full) y = ag::Mul(y, ConstantMask(y.shape(), out_valid, 1));
  return {y, nominal_out, g.out_w, out_valid};
}

ag::Var Pool(const Stage& s, const EncoderParams& p, bool full, EncoderTrace* trace) {
  ag::Var frames = ag::Transpose(ag::MeanAxis(s.x, 2));
  std::vector<bool> mask(frames.shape()[0], !full);
  if (full)
    for (std::size_t t = 0; t < std::min(s.valid, mask.size()); ++t) mask[t] = true;
  ag::Var h = AttentionPool(frames, mask, p.att_weight, p.att_bias, p.att_vector);
  if (trace != nullptr) {
    trace->frames = frames;
    trace->frame_mask = mask;
  }
  return h;
}

}  // namespace

ag::Var EncodeValid(const ag::Var& x, const EncoderParams& p, EncoderTrace* trace) {
  if (x.shape().size() != 2 || x.shape()[1] != kNumMelBins || x.shape()[0] == 0 ||
      x.shape()[0] > kMaxFrames)
    throw DataError("encode: expected 1..500 x 80 input, got " + ag::ShapeToString(x.shape()));
  const std::size_t len = x.shape()[0];
  Stage s{ag::Reshape(Normalize(x, p), {1, len, kNumMelBins}), kMaxFrames, kNumMelBins, len};
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    s = RunBlock(s, p.blocks[b], false);
    if (trace != nullptr) trace->block_outputs.push_back(s.x.shape());
  }
  return Pool(s, p, false, trace);
}

ag::Var Encode(const ag::Var& x, const std::vector<bool>& mask, const EncoderParams& p,
               EncodePath path, EncoderTrace* trace) {
  if (x.shape() != ag::Shape{kMaxFrames, kNumMelBins})
    throw DataError("encode: expected 500 x 80 input, got " + ag::ShapeToString(x.shape()));
  if (mask.size() != kMaxFrames) throw DataError("encode: mask must have 500 entries");
  const std::size_t valid = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (valid == 0) throw DataError("encode: no real frames");
  for (std::size_t t = 0; t < kMaxFrames; ++t)
    if (mask[t] != (t < valid)) throw DataError("encode: mask must mark a prefix of frames");

  if (path == EncodePath::kTruncated) return EncodeValid(ag::SliceRows(x, 0, valid), p, trace);

  ag::Var norm = ag::Mul(Normalize(x, p), ConstantMask(x.shape(), valid, 0));
  Stage s{ag::Reshape(norm, {1, kMaxFrames, kNumMelBins}), kMaxFrames, kNumMelBins, valid};
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    s = RunBlock(s, p.blocks[b], true);
    if (trace != nullptr) trace->block_outputs.push_back(s.x.shape());
  }
  return Pool(s, p, true, trace);
}

ag::Var AttentionPool(const ag::Var& frames, const std::vector<bool>& mask,
                      const ag::Var& weight, const ag::Var& bias, const ag::Var& vector) {
  if (frames.shape().size() != 2) throw DataError("attention_pool: frames must be [T, D]");
  const std::size_t t = frames.shape()[0], d = frames.shape()[1];
  if (mask.size() != t) throw DataError("attention_pool: mask length mismatch");
  if (std::none_of(mask.begin(), mask.end(), [](bool m) { return m; }))
    throw DataError("attention_pool: zero unmasked frames");
  const ag::Var u = ag::Tanh(ag::Add(ag::MatMul(frames, weight), bias));
  const ag::Var scores = ag::Reshape(ag::MatMul(u, vector), {t});
  const ag::Var alpha = ag::MaskedSoftmax(scores, mask);
  return ag::Reshape(ag::MatMul(ag::Reshape(alpha, {1, t}), frames), {d});
}

ag::Var Classify(const ag::Var& rep, const ClassifierParams& p) {
  if (rep.size() != kRepDim) throw DataError("classify: representation must have 256 entries");
  return ag::Reshape(ag::Add(ag::MatMul(ag::Reshape(rep, {1, kRepDim}), p.weight), p.bias),
                     {kNumEmotions});
}

std::size_t Argmax(const ag::Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

}  // namespace nrser
