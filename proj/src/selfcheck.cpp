// src/selfcheck.cpp
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

#include "nrser/selfcheck.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "nrser/bridge.hpp"
#include "nrser/corpus.hpp"
#include "nrser/enhance.hpp"
#include "nrser/gradcheck.hpp"
#include "nrser/snr_aware.hpp"
#include "nrser/spectrogram_tensor.hpp"
#include "nrser/trainer.hpp"

namespace nrser {

namespace {

constexpr double kGradTolerance = 1e-4;

ag::Tensor Random(const ag::Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                  double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ag::Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Values in +-[0.1, 1] so kinks at zero are never straddled.
ag::Tensor AwayFromZero(const ag::Shape& shape, std::mt19937_64& rng) {
  ag::Tensor t = Random(shape, rng, 0.1, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (flip(rng)) t[i] = -t[i];
  return t;
}

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed), seed_(seed) {}

  // Checks sum(weights * f(params)) against central differences.
  void Op(const std::string& name, const std::vector<ag::Var>& params,
          const std::function<ag::Var()>& f, std::size_t max_coordinates = 200) {
    const ag::Shape shape = f().shape();
    const ag::Var weights = ag::Constant(Random(shape, rng_));
    Loss(name, params, [&] { return ag::Sum(ag::Mul(f(), weights)); }, max_coordinates);
  }

  void Loss(const std::string& name, const std::vector<ag::Var>& params,
            const std::function<ag::Var()>& loss, std::size_t max_coordinates = 200) {
    ag::FiniteDiffOptions opts;
    opts.max_coordinates = max_coordinates;
    opts.seed = MixSeed(seed_, HashString(name));
    const ag::FiniteDiffResult r = ag::FiniteDiffCheck(loss, params, opts);
    out_.push_back({name, r.max_rel_error, kGradTolerance, r.max_rel_error < kGradTolerance});
  }

  std::mt19937_64& rng() { return rng_; }
  std::vector<CheckOutcome> Take() { return std::move(out_); }

 private:
  std::mt19937_64 rng_;
  std::uint64_t seed_;
  std::vector<CheckOutcome> out_;
};

}  // namespace

std::vector<CheckOutcome> GradientSuite(std::uint64_t seed) {
  Suite s(seed);
  auto& rng = s.rng();
  using namespace ag;

  {
    Var a = Parameter(Random({3, 4}, rng)), b = Parameter(Random({3, 4}, rng));
    Var row = Parameter(Random({4}, rng)), one = Parameter(Random({1}, rng));
    s.Op("add", {a, b, row}, [&] { return Add(Add(a, b), row); });
    s.Op("sub", {a, b, one}, [&] { return Sub(Sub(a, b), one); });
    s.Op("mul", {a, b, row, one}, [&] { return Mul(Mul(Mul(a, b), row), one); });
    s.Op("scale", {a}, [&] { return Scale(a, -1.7); });
    s.Op("add_scalar", {a}, [&] { return AddScalar(a, 0.3); });
    s.Op("tanh", {a}, [&] { return Tanh(a); });
    s.Op("transpose", {a}, [&] { return Transpose(a); });
    s.Op("reshape", {a}, [&] { return Reshape(a, {2, 6}); });
    s.Op("slice_rows", {a}, [&] { return SliceRows(a, 1, 3); });
    s.Op("sum", {a}, [&] { return Reshape(Sum(a), {1}); });
    s.Op("mean", {a}, [&] { return Reshape(Mean(a), {1}); });
    s.Op("mean_axis", {a}, [&] { return MeanAxis(a, 1); });
    s.Op("softmax_axis0", {a}, [&] { return Softmax(a, 0); });
    s.Op("softmax_axis1", {a}, [&] { return Softmax(a, 1); });
    s.Loss("mse", {a, b}, [&] { return Mse(a, b); });
  }
  {
    Var k = Parameter(AwayFromZero({5, 3}, rng));
    s.Op("relu", {k}, [&] { return Relu(k); });
    Var c = Parameter(Random({6}, rng, 0.05, 0.95));
    Var c_out = Parameter(Tensor({2}, std::vector<double>{-0.4, 1.3}));
    s.Op("clamp01", {c, c_out}, [&] { return Add(Clamp01(c), Sum(Clamp01(c_out))); });
  }
  {
    Var a = Parameter(Random({3, 5}, rng)), b = Parameter(Random({5, 2}, rng));
    s.Op("matmul", {a, b}, [&] { return MatMul(a, b); });
  }
  {
    Var x = Parameter(Random({2, 9, 7}, rng)), w = Parameter(Random({3, 2, 5, 5}, rng));
    Var bias = Parameter(Random({3}, rng));
    const ConvGeometry g = SameGeometry(9, 7, 5, 2);
    s.Op("conv2d", {x, w, bias}, [&] { return Conv2d(x, w, bias, g); });
  }
  {
    Var v = Parameter(Random({6}, rng));
    const std::vector<bool> mask = {true, true, false, true, false, true};
    s.Op("masked_softmax", {v}, [&] { return MaskedSoftmax(v, mask); });
    Var logits = Parameter(Random({4}, rng));
    s.Loss("cross_entropy", {logits}, [&] { return CrossEntropy(logits, 2); });
  }
  {
    Var frames = Parameter(Random({4, kRepDim}, rng));
    Var w = Parameter(Random({kRepDim, kRepDim}, rng, -0.1, 0.1));
    Var b = Parameter(Random({kRepDim}, rng, -0.1, 0.1));
    Var v = Parameter(Random({kRepDim, 1}, rng, -0.1, 0.1));
    const std::vector<bool> mask(4, true);
    s.Op("attention_pool", {frames, w, b, v},
         [&] { return AttentionPool(frames, mask, w, b, v); });
  }
  {
    Var h = Parameter(Random({kRepDim}, rng));
    Var c = Parameter(Tensor({1}, 0.4));
    BridgeParams p = BridgeParams::Identity();
    p.scale_weight = Parameter(Random({kRepDim}, rng));
    p.shift_weight = Parameter(Random({kRepDim}, rng));
    std::vector<Var> params = {h, c};
    for (const Var& v : p.Trainable()) params.push_back(v);
    s.Op("calibrate", params, [&] { return Calibrate(h, c, p); }, 400);
  }
  {
    const Spectrogram x = ToSpectrogram(Random({6, kNumMelBins}, rng, -3, 1));
    const Spectrogram e = ToSpectrogram(Random({6, kNumMelBins}, rng, -3, 1));
    const std::vector<double> d = SimilarityVector(x, e);
    SnrAwareParams p = SnrAwareParams::Init();
    p.bias = Parameter(Tensor({1}, 0.3));
    Var xv = Parameter(ToTensor(x)), ev = Parameter(ToTensor(e));
    std::vector<Var> params = {p.weight, p.bias, xv, ev};
    s.Op("coefficient_compensate", params,
         [&] { return Compensate(xv, ev, EstimateCoefficient(d, p).value); });
  }
  {
    // Encoder on a short input with small weights.
    SerParams ser = SerParams::Init(MixSeed(seed, 1));
    Var x = Parameter(Random({9, kNumMelBins}, rng, -2, 0));
    std::vector<Var> params = ser.encoder.Trainable();
    params.push_back(x);
    s.Op("encoder", params, [&] { return EncodeValid(x, ser.encoder); }, 300);
  }
  {
    // Composite loss on a two-utterance batch of noisy views.
    OracleWienerEnhancer enhancer;
    std::vector<TrainingExample> views;
    for (int i = 0; i < 2; ++i) {
      const Waveform clean = SynthUtterance(static_cast<Emotion>(i), "ses1_spk0", 1.0,
                                            MixSeed(seed, 10 + i));
      const Waveform noise = SynthNoise(NoiseKind::kWhite, 2.0, MixSeed(seed, 20 + i));
      views.push_back(MakeTrainingView("u" + std::to_string(i), static_cast<Emotion>(i), clean,
                                       &noise, 5.0 + 5.0 * i, &enhancer, MixSeed(seed, 30 + i)));
    }
    Model model = Model::Create(ModelKind::kTrnet, MixSeed(seed, 2));
    model.bridge.scale_weight = Parameter(Random({kRepDim}, rng, -0.5, 0.5));
    model.bridge.shift_weight = Parameter(Random({kRepDim}, rng, -0.5, 0.5));
    const SerParams reference = SerParams::Init(MixSeed(seed, 3)).Frozen();
    std::vector<ag::Tensor> refs;
    for (const auto& v : views) refs.push_back(ReferenceRepresentation(v.target(), reference));
    const std::vector<const TrainingExample*> batch = {&views[0], &views[1]};
    const std::vector<const ag::Tensor*> ref_ptrs = {&refs[0], &refs[1]};
    auto loss = [&] { return TotalLoss(model, batch, ref_ptrs, 0.5, 0.5).total; };
    s.Loss("composite_loss.snr_aware", model.snr.Trainable(), loss, 100);
    s.Loss("composite_loss.bridge", model.bridge.Trainable(), loss, 100);
    s.Loss("composite_loss.recognizer", model.ser.Trainable(), loss, 150);
  }
  return s.Take();
}

std::vector<CheckOutcome> DspSuite(std::uint64_t seed) {
  std::vector<CheckOutcome> out;
  auto add = [&](std::string name, double value, double threshold) {
    out.push_back({std::move(name), value, threshold, value < threshold});
  };
  const Waveform speech = SynthUtterance(Emotion::kHappy, "ses1_spk0", 1.5, MixSeed(seed, 1));
  const Waveform noise = SynthNoise(NoiseKind::kTonalBabble, 3.0, MixSeed(seed, 2));

  {
    const FrameConfig cfg;
    const Waveform back = Istft(Stft(speech, cfg), cfg);
    double err = 0;
    // Interior samples are covered by full window overlap.
    for (std::size_t i = cfg.frame_len; i + cfg.frame_len < back.size(); ++i)
      err = std::max(err, std::abs(back[i] - speech[i]));
    add("stft_round_trip", err, 1e-9);
  }
  {
    double err = 0;
    for (double snr : {0.0, 5.0, 10.0, 15.0, 20.0}) {
      const MixResult mix = MixAtSnr(speech, noise, snr, MixSeed(seed, 3));
      err = std::max(err, std::abs(MeasureSnr(speech, mix.scaled_noise) - snr));
    }
    add("snr_mixing", err, 1e-6);
  }
  {
    const Spectrogram x = Lmfb(MixAtSnr(speech, noise, 5.0, 0).mixture);
    const Spectrogram e = Lmfb(speech);
    const double at_one = (Compensate(x, e, 1.0) - x).cwiseAbs().maxCoeff();
    const double at_zero = (Compensate(x, e, 0.0) - e).cwiseAbs().maxCoeff();
    // Bit-exact endpoints: any difference fails.
    add("compensate_endpoints", at_one + at_zero, 1e-300);
  }
  return out;
}

}  // namespace nrser
