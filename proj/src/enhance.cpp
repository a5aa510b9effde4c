// src/enhance.cpp
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

#include "nrser/enhance.hpp"

#include <algorithm>
#include <cmath>

namespace nrser {

namespace {

const FrameConfig kFrames{};

// Zero padding so every original sample has window support on both sides.
constexpr std::size_t kFrontPad = 240;

struct Padded {
  Waveform wave;
  std::size_t length = 0;  // original length
};

Padded PadForAnalysis(const Waveform& w) {
  const std::size_t n = w.size();
  std::size_t total = kFrontPad + n + kFrontPad;
  if (total < static_cast<std::size_t>(kFrames.frame_len)) total = kFrames.frame_len;
  const std::size_t rem = (total - kFrames.frame_len) % kFrames.hop;
  if (rem != 0) total += kFrames.hop - rem;
  std::vector<double> x(total, 0.0);
  std::copy(w.samples().begin(), w.samples().end(), x.begin() + kFrontPad);
  return {Waveform(std::move(x)), n};
}

Waveform CropAfterSynthesis(const Waveform& padded_out, std::size_t length) {
  std::vector<double> y(length);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t j = kFrontPad + i;
    y[i] = j < padded_out.size() ? padded_out[j] : 0.0;
  }
  return Waveform(std::move(y));
}

std::uint64_t HashDoubles(std::initializer_list<double> v, std::string_view tag) {
  std::uint64_t h = HashString(tag);
  for (double d : v) h = HashBytes(&d, sizeof d, h);
  return h;
}

ComplexMatrix ApplyGain(const ComplexMatrix& spec, const Matrix& gain) {
  ComplexMatrix out(spec.rows(), spec.cols());
  for (Eigen::Index t = 0; t < spec.rows(); ++t)
    for (Eigen::Index k = 0; k < spec.cols(); ++k) out(t, k) = gain(t, k) * spec(t, k);
  return out;
}

}  // namespace

std::uint64_t IdentityEnhancer::Checksum() const { return HashString(name()); }

Waveform IdentityEnhancer::Enhance(const Waveform& noisy, const Waveform*) const {
  return noisy;
}

ComplexMatrix AnalysisStft(const Waveform& w) { return Stft(PadForAnalysis(w).wave, kFrames); }

Waveform MaskEnhancer::Enhance(const Waveform& noisy, const Waveform* clean_ref) const {
  const Padded p = PadForAnalysis(noisy);
  const ComplexMatrix spec = Stft(p.wave, kFrames);
  const Matrix gain = GainMask(noisy, clean_ref);
  if (gain.rows() != spec.rows() || gain.cols() != spec.cols())
    throw Error(std::string(name()) + ": gain mask shape does not match the STFT");
  return CropAfterSynthesis(Istft(ApplyGain(spec, gain), kFrames), p.length);
}

ComponentSnr MeasureComponentSnr(const MaskEnhancer& enhancer, const Waveform& speech,
                                 const Waveform& noise) {
  if (speech.size() != noise.size())
    throw DataError("MeasureComponentSnr: speech/noise length mismatch");
  std::vector<double> sum(speech.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = speech[i] + noise[i];
  const Matrix gain = enhancer.GainMask(Waveform(std::move(sum)), &speech);
  auto filter = [&](const Waveform& x) {
    const Padded p = PadForAnalysis(x);
    return CropAfterSynthesis(Istft(ApplyGain(Stft(p.wave, kFrames), gain), kFrames), p.length);
  };
  ComponentSnr r;
  r.input_db = MeasureSnr(speech, noise);
  r.output_db = MeasureSnr(filter(speech), filter(noise));
  return r;
}

std::uint64_t SpectralSubtractionEnhancer::Checksum() const {
  return HashDoubles({params_.noise_percentile, params_.floor_ratio}, name());
}

std::vector<double> SpectralSubtractionEnhancer::EstimateNoise(
    const ComplexMatrix& spec, Eigen::Index first_frame, Eigen::Index num_frames) const {
  std::vector<double> noise(spec.cols());
  std::vector<double> mags(num_frames);
  const auto pick = static_cast<std::size_t>(
      std::llround(params_.noise_percentile * static_cast<double>(num_frames - 1)));
  for (Eigen::Index k = 0; k < spec.cols(); ++k) {
    for (Eigen::Index t = 0; t < num_frames; ++t) mags[t] = std::abs(spec(first_frame + t, k));
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(pick), mags.end());
    noise[k] = mags[pick];
  }
  return noise;
}

Matrix SpectralSubtractionEnhancer::SubtractionGain(const ComplexMatrix& spec,
                                                    const std::vector<double>& noise) const {
  Matrix gain(spec.rows(), spec.cols());
  for (Eigen::Index t = 0; t < spec.rows(); ++t) {
    for (Eigen::Index k = 0; k < spec.cols(); ++k) {
      const double mag = std::abs(spec(t, k));
      const double enhanced = std::max(mag - noise[k], params_.floor_ratio * noise[k]);
      gain(t, k) = mag > 0.0 ? enhanced / mag : 0.0;
    }
  }
  return gain;
}

ComplexMatrix SpectralSubtractionEnhancer::Subtract(const ComplexMatrix& spec,
                                                    const std::vector<double>& noise) const {
  return ApplyGain(spec, SubtractionGain(spec, noise));
}

Matrix SpectralSubtractionEnhancer::GainMask(const Waveform& noisy, const Waveform*) const {
  kFrames.NumFrames(noisy.size());
  const Padded p = PadForAnalysis(noisy);
  const ComplexMatrix spec = Stft(p.wave, kFrames);

  // Estimate only from frames lying entirely inside the original signal.
  const Eigen::Index first = (kFrontPad + kFrames.hop - 1) / kFrames.hop;
  Eigen::Index count = 0;
  while (first + count < spec.rows() &&
         (first + count) * kFrames.hop + kFrames.frame_len <= static_cast<Eigen::Index>(kFrontPad + p.length))
    ++count;
  const std::vector<double> noise = count > 0 ? EstimateNoise(spec, first, count)
                                              : EstimateNoise(spec, 0, spec.rows());
  return SubtractionGain(spec, noise);
}

std::uint64_t OracleWienerEnhancer::Checksum() const { return HashString(name()); }

Matrix OracleWienerEnhancer::GainMask(const Waveform& noisy, const Waveform* clean_ref) const {
  if (clean_ref == nullptr)
    throw UsageError("oracle_wiener requires the clean reference signal");
  if (clean_ref->size() != noisy.size())
    throw DataError("oracle_wiener: noisy/clean length mismatch");
  std::vector<double> noise(noisy.size());
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = noisy[i] - (*clean_ref)[i];

  const ComplexMatrix s = AnalysisStft(*clean_ref);
  const ComplexMatrix n = AnalysisStft(Waveform(std::move(noise)));
  Matrix gain(s.rows(), s.cols());
  for (Eigen::Index t = 0; t < s.rows(); ++t) {
    for (Eigen::Index k = 0; k < s.cols(); ++k) {
      const double ps2 = std::norm(s(t, k)), pn2 = std::norm(n(t, k));
      gain(t, k) = (ps2 + pn2) > 0.0 ? ps2 / (ps2 + pn2) : 1.0;
    }
  }
  return gain;
}

Waveform SpectralSubtract(const Waveform& noisy) {
  return SpectralSubtractionEnhancer().Enhance(noisy, nullptr);
}

Waveform OracleWiener(const Waveform& noisy, const Waveform& clean_ref) {
  return OracleWienerEnhancer().Enhance(noisy, &clean_ref);
}

std::unique_ptr<Enhancer> MakeEnhancer(std::string_view name) {
  if (name == "identity") return std::make_unique<IdentityEnhancer>();
  if (name == "specsub") return std::make_unique<SpectralSubtractionEnhancer>();
  if (name == "oracle_wiener") return std::make_unique<OracleWienerEnhancer>();
  throw UsageError("unknown enhancer '" + std::string(name) +
                   "' (expected identity, specsub or oracle_wiener)");
}

}  // namespace nrser
