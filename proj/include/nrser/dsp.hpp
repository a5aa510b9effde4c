// nrser/dsp.hpp
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

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nrser/common.hpp"

namespace nrser {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic,
                                    Eigen::Dynamic, Eigen::RowMajor>;

/// T x 80 log-mel filterbank energies.
using Spectrogram = Matrix;

/// Mono 16 kHz audio. Construction checks the sample rate, length and
/// finiteness; amplitudes are not clipped here (mixtures may exceed 1).
class Waveform {
 public:
  Waveform() = default;
  explicit Waveform(std::vector<double> samples, int sample_rate = kSampleRate);

  std::span<const double> samples() const { return samples_; }
  std::vector<double>& mutable_samples() { return samples_; }
  std::size_t size() const { return samples_.size(); }
  int sample_rate() const { return sample_rate_; }
  double duration_s() const {
    return static_cast<double>(samples_.size()) / sample_rate_;
  }
  double operator[](std::size_t i) const { return samples_[i]; }

 private:
  std::vector<double> samples_;
  int sample_rate_ = kSampleRate;
};

double Rms(std::span<const double> x);
double Energy(std::span<const double> x);

struct FrameConfig {
  int frame_len = 400;  // 25 ms
  int hop = 160;        // 10 ms
  int fft_size = 512;

  void Validate() const;
  int NumBins() const { return fft_size / 2 + 1; }
  /// 1 + floor((n - frame_len) / hop); throws if n < frame_len.
  int NumFrames(std::size_t num_samples) const;
};

/// Periodic Hann window of length n.
std::vector<double> HannWindow(int n);

/// T x (fft_size/2 + 1) complex STFT. Frame t covers samples
/// [t*hop, t*hop + frame_len), windowed and zero-padded to fft_size.
ComplexMatrix Stft(const Waveform& w, const FrameConfig& cfg = {});

/// Weighted overlap-add inverse of Stft. The synthesis window equals the
/// analysis window and each sample is normalized by the summed squared
/// window, so unmodified spectra reconstruct exactly wherever that sum is
/// nonzero. Output length is (T-1)*hop + frame_len; samples with no window
/// support are zero.
Waveform Istft(const ComplexMatrix& spec, const FrameConfig& cfg = {});

/// num_mel x (fft_size/2+1) triangular filters on the HTK mel scale between
/// low_hz and high_hz.
Matrix MelFilterbank(int num_mel = kNumMelBins, const FrameConfig& cfg = {},
                     double low_hz = 0.0, double high_hz = kSampleRate / 2.0);

/// Power spectrum -> 80 mel filters -> log(max(energy, 1e-10)).
Spectrogram Lmfb(const Waveform& w, const FrameConfig& cfg = {});

struct MixResult {
  Waveform mixture;
  Waveform scaled_noise;
  double gain = 0.0;
};

/// Loops (if shorter) or crops at a seeded random offset (if longer) the noise
/// to the speech length.
std::vector<double> FitNoiseLength(std::span<const double> noise,
                                   std::size_t length, std::uint64_t seed);

/// Scales the length-adapted noise so that the whole-signal power ratio is
/// snr_db and adds it to the speech.
MixResult MixAtSnr(const Waveform& speech, const Waveform& noise,
                   double snr_db, std::uint64_t seed = 0);

/// 10*log10(sum s^2 / sum n^2).
double MeasureSnr(std::span<const double> speech, std::span<const double> noise);
double MeasureSnr(const Waveform& speech, const Waveform& noise);

// 16-bit little-endian PCM, mono, 16 kHz.
Waveform ReadWav(const std::filesystem::path& path);
Waveform ReadWavBytes(std::span<const std::uint8_t> bytes);
void WriteWav(const std::filesystem::path& path, const Waveform& w);
std::vector<std::uint8_t> EncodeWav(const Waveform& w);

// Feature cache: "LMFB", u32 version, u32 T, u32 F, then T*F float32 LE.
inline constexpr std::uint32_t kFeatureCacheVersion = 1;
void WriteFeatureCache(const std::filesystem::path& path, const Spectrogram& s);
Spectrogram ReadFeatureCache(const std::filesystem::path& path);

}  // namespace nrser
