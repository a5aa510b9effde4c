// nrser/enhance.hpp
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
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "nrser/dsp.hpp"

namespace nrser {

/// Frozen speech-enhancement front end: waveform in, same-length waveform
/// out. Implementations hold only immutable parameters, so Enhance is pure
/// and may be called concurrently.
///
/// Reference-driven enhancers (oracle_wiener) emulate a strong pretrained
/// model by consuming the clean signal; they throw when it is absent. The
/// reference is only ever seen by the enhancer, never by the recognizer.
class Enhancer {
 public:
  virtual ~Enhancer() = default;

  virtual std::string_view name() const = 0;
  virtual bool needs_reference() const { return false; }
  /// Hash of the frozen parameters.
  virtual std::uint64_t Checksum() const = 0;

  virtual Waveform Enhance(const Waveform& noisy,
                           const Waveform* clean_ref = nullptr) const = 0;
};

/// Enhancer that scales each time-frequency bin of the noisy STFT by a real
/// gain and keeps the noisy phase.
class MaskEnhancer : public Enhancer {
 public:
  Waveform Enhance(const Waveform& noisy, const Waveform* clean_ref) const final;

  /// Gain per (frame, bin) over the analysis STFT of the zero-padded signal
  /// (see AnalysisStft).
  virtual Matrix GainMask(const Waveform& noisy, const Waveform* clean_ref) const = 0;
};

/// STFT of the signal zero-padded so every sample has full window support;
/// the frame grid used by MaskEnhancer::GainMask.
ComplexMatrix AnalysisStft(const Waveform& w);

/// SNR of known speech and noise components, before and after both are
/// filtered by the same gain mask computed on their sum.
struct ComponentSnr {
  double input_db = 0.0;
  double output_db = 0.0;
  double gain_db() const { return output_db - input_db; }
};
ComponentSnr MeasureComponentSnr(const MaskEnhancer& enhancer, const Waveform& speech,
                                 const Waveform& noise);

class IdentityEnhancer final : public Enhancer {
 public:
  std::string_view name() const override { return "identity"; }
  std::uint64_t Checksum() const override;
  Waveform Enhance(const Waveform& noisy, const Waveform* clean_ref) const override;
};

/// Magnitude subtraction with a blind per-bin noise estimate (a low
/// percentile of the magnitudes across frames), a spectral floor relative to
/// the estimate, and the noisy phase.
class SpectralSubtractionEnhancer final : public MaskEnhancer {
 public:
  struct Params {
    double noise_percentile = 0.10;
    double floor_ratio = 0.01;
  };

  SpectralSubtractionEnhancer() = default;
  explicit SpectralSubtractionEnhancer(Params p) : params_(p) {}

  std::string_view name() const override { return "specsub"; }
  std::uint64_t Checksum() const override;
  Matrix GainMask(const Waveform& noisy, const Waveform* clean_ref) const override;

  /// Per-bin noise magnitude estimate over the given frames.
  std::vector<double> EstimateNoise(const ComplexMatrix& spec, Eigen::Index first_frame,
                                    Eigen::Index num_frames) const;
  /// max(|Y| - N, floor_ratio * N) / |Y|; zero where |Y| = 0.
  Matrix SubtractionGain(const ComplexMatrix& spec, const std::vector<double>& noise) const;
  /// max(|Y| - N, floor_ratio * N) with the phase of Y.
  ComplexMatrix Subtract(const ComplexMatrix& spec, const std::vector<double>& noise) const;

  const Params& params() const { return params_; }

 private:
  const Params params_{};
};

/// Ideal ratio mask |S|^2 / (|S|^2 + |N|^2) with N = noisy - clean, applied to
/// the noisy STFT.
class OracleWienerEnhancer final : public MaskEnhancer {
 public:
  std::string_view name() const override { return "oracle_wiener"; }
  bool needs_reference() const override { return true; }
  std::uint64_t Checksum() const override;
  Matrix GainMask(const Waveform& noisy, const Waveform* clean_ref) const override;
};

Waveform SpectralSubtract(const Waveform& noisy);
Waveform OracleWiener(const Waveform& noisy, const Waveform& clean_ref);

/// "identity" | "specsub" | "oracle_wiener".
std::unique_ptr<Enhancer> MakeEnhancer(std::string_view name);

}  // namespace nrser
