// src/dsp.cpp
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

#include "nrser/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <unsupported/Eigen/FFT>

#include "binary_io.hpp"

namespace nrser {

namespace io {

std::vector<std::uint8_t> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFile(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace io

Waveform::Waveform(std::vector<double> samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  if (sample_rate_ != kSampleRate)
    throw DataError("16 kHz required (got " + std::to_string(sample_rate_) + " Hz)");
  if (samples_.empty()) throw DataError("waveform must have at least one sample");
  for (double v : samples_)
    if (!std::isfinite(v)) throw NumericalError("non-finite waveform sample");
}

double Energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double Rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::sqrt(Energy(x) / static_cast<double>(x.size()));
}

void FrameConfig::Validate() const {
  if (frame_len <= 0 || hop <= 0 || fft_size <= 0)
    throw UsageError("frame config values must be positive");
  if (frame_len > fft_size) throw UsageError("frame_len must not exceed fft_size");
  if (hop > frame_len) throw UsageError("hop must not exceed frame_len");
}

int FrameConfig::NumFrames(std::size_t num_samples) const {
  if (num_samples < static_cast<std::size_t>(frame_len))
    throw DataError("waveform shorter than one frame (" +
                    std::to_string(num_samples) + " < " +
                    std::to_string(frame_len) + " samples)");
  return 1 + static_cast<int>((num_samples - frame_len) / hop);
}

std::vector<double> HannWindow(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

namespace {

Eigen::FFT<double>& HalfSpectrumFft() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}

}  // namespace

ComplexMatrix Stft(const Waveform& w, const FrameConfig& cfg) {
  cfg.Validate();
  const int num_frames = cfg.NumFrames(w.size());
  const int num_bins = cfg.NumBins();
  const std::vector<double> window = HannWindow(cfg.frame_len);
  auto& fft = HalfSpectrumFft();

  ComplexMatrix out(num_frames, num_bins);
  std::vector<double> frame(cfg.fft_size, 0.0);
  std::vector<std::complex<double>> spec;
  const auto x = w.samples();
  for (int t = 0; t < num_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.frame_len; ++i) frame[i] = x[start + i] * window[i];
    fft.fwd(spec, frame);
    for (int k = 0; k < num_bins; ++k) out(t, k) = spec[k];
  }
  return out;
}

Waveform Istft(const ComplexMatrix& spec, const FrameConfig& cfg) {
  cfg.Validate();
  if (spec.cols() != cfg.NumBins())
    throw DataError("istft: spectrum has " + std::to_string(spec.cols()) +
                    " bins, expected " + std::to_string(cfg.NumBins()));
  if (spec.rows() < 1) throw DataError("istft: no frames");
  const int num_frames = static_cast<int>(spec.rows());
  const std::size_t length =
      static_cast<std::size_t>(num_frames - 1) * cfg.hop + cfg.frame_len;
  const std::vector<double> window = HannWindow(cfg.frame_len);
  auto& fft = HalfSpectrumFft();

  std::vector<double> acc(length, 0.0), norm(length, 0.0);
  std::vector<std::complex<double>> bins(cfg.NumBins());
  std::vector<double> frame;
  for (int t = 0; t < num_frames; ++t) {
    for (int k = 0; k < cfg.NumBins(); ++k) bins[k] = spec(t, k);
    fft.inv(frame, bins, cfg.fft_size);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.frame_len; ++i) {
      acc[start + i] += frame[i] * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }
  for (std::size_t n = 0; n < length; ++n)
    acc[n] = norm[n] > 1e-8 ? acc[n] / norm[n] : 0.0;
  return Waveform(std::move(acc));
}

namespace {
double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
}  // namespace

Matrix MelFilterbank(int num_mel, const FrameConfig& cfg, double low_hz,
                     double high_hz) {
  cfg.Validate();
  if (num_mel < 1 || !(high_hz > low_hz) || low_hz < 0.0)
    throw UsageError("invalid mel filterbank range");
  const int num_bins = cfg.NumBins();
  const double mel_low = HzToMel(low_hz), mel_high = HzToMel(high_hz);
  const double step = (mel_high - mel_low) / (num_mel + 1);

  Matrix fb = Matrix::Zero(num_mel, num_bins);
  for (int m = 0; m < num_mel; ++m) {
    const double left = mel_low + m * step;
    const double center = left + step;
    const double right = center + step;
    for (int k = 0; k < num_bins; ++k) {
      const double hz = static_cast<double>(k) * kSampleRate / cfg.fft_size;
      if (hz < low_hz || hz > high_hz) continue;
      const double mel = HzToMel(hz);
      if (mel > left && mel <= center)
        fb(m, k) = (mel - left) / step;
      else if (mel > center && mel < right)
        fb(m, k) = (right - mel) / step;
    }
  }
  return fb;
}

Spectrogram Lmfb(const Waveform& w, const FrameConfig& cfg) {
  static const Matrix kFilters = MelFilterbank();
  const Matrix filters = (cfg.fft_size == 512) ? kFilters : MelFilterbank(kNumMelBins, cfg);
  const ComplexMatrix spec = Stft(w, cfg);
  const Matrix power = spec.cwiseAbs2();
  Spectrogram out = power * filters.transpose();
  out = out.unaryExpr([](double e) { return std::log(std::max(e, kLogFloor)); });
  return out;
}

std::vector<double> FitNoiseLength(std::span<const double> noise,
                                   std::size_t length, std::uint64_t seed) {
  if (noise.empty()) throw DataError("empty noise signal");
  std::vector<double> out(length);
  if (noise.size() <= length) {
    for (std::size_t i = 0; i < length; ++i) out[i] = noise[i % noise.size()];
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, noise.size() - length);
    const std::size_t offset = pick(rng);
    std::copy_n(noise.begin() + static_cast<std::ptrdiff_t>(offset), length, out.begin());
  }
  return out;
}

MixResult MixAtSnr(const Waveform& speech, const Waveform& noise,
                   double snr_db, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) throw UsageError("target SNR must be finite");
  const double speech_rms = Rms(speech.samples());
  if (speech_rms <= 0.0) throw DataError("mix_at_snr: speech has zero RMS");
  std::vector<double> fitted = FitNoiseLength(noise.samples(), speech.size(), seed);
  const double noise_rms = Rms(fitted);
  if (noise_rms <= 0.0) throw DataError("mix_at_snr: noise has zero RMS");

  const double gain = (speech_rms / noise_rms) * std::pow(10.0, -snr_db / 20.0);
  std::vector<double> mixture(speech.size());
  for (std::size_t i = 0; i < fitted.size(); ++i) {
    fitted[i] *= gain;
    mixture[i] = speech[i] + fitted[i];
  }
  return {Waveform(std::move(mixture)), Waveform(std::move(fitted)), gain};
}

double MeasureSnr(std::span<const double> speech, std::span<const double> noise) {
  if (speech.size() != noise.size())
    throw DataError("measure_snr: length mismatch");
  const double pn = Energy(noise);
  if (pn <= 0.0) throw DataError("measure_snr: zero noise power");
  return 10.0 * std::log10(Energy(speech) / pn);
}

double MeasureSnr(const Waveform& speech, const Waveform& noise) {
  return MeasureSnr(speech.samples(), noise.samples());
}

Waveform ReadWavBytes(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "wav");
  if (r.Str(4) != "RIFF") r.Fail("not a RIFF file");
  r.U32();
  if (r.Str(4) != "WAVE") r.Fail("not a WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  while (r.remaining() >= 8) {
    const std::string id = r.Str(4);
    const std::uint32_t size = r.U32();
    if (id == "fmt ") {
      const std::size_t start = r.position();
      format = r.U16();
      channels = r.U16();
      rate = r.U32();
      r.U32();  // byte rate
      r.U16();  // block align
      bits = r.U16();
      r.Seek(start + size);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) r.Fail("data chunk before fmt chunk");
      if (format != 1) r.Fail("PCM encoding required");
      if (channels != 1) r.Fail("mono required");
      if (rate != static_cast<std::uint32_t>(kSampleRate)) r.Fail("16 kHz required");
      if (bits != 16) r.Fail("16-bit PCM required");
      const std::size_t n = std::min<std::size_t>(size, r.remaining()) / 2;
      std::vector<double> samples(n);
      for (std::size_t i = 0; i < n; ++i) samples[i] = r.I16() / 32768.0;
      return Waveform(std::move(samples));
    } else {
      r.Skip(std::min<std::size_t>(size + (size & 1u), r.remaining()));
    }
  }
  r.Fail("no data chunk");
}

Waveform ReadWav(const std::filesystem::path& path) {
  const auto bytes = io::ReadFile(path.string());
  try {
    return ReadWavBytes(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> EncodeWav(const Waveform& w) {
  const auto data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  io::ByteWriter out;
  out.Tag("RIFF");
  out.U32(36 + data_bytes);
  out.Tag("WAVE");
  out.Tag("fmt ");
  out.U32(16);
  out.U16(1);
  out.U16(1);
  out.U32(kSampleRate);
  out.U32(kSampleRate * 2);
  out.U16(2);
  out.U16(16);
  out.Tag("data");
  out.U32(data_bytes);
  for (double v : w.samples()) {
    const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
    out.I16(static_cast<std::int16_t>(q));
  }
  return std::move(out.buffer());
}

void WriteWav(const std::filesystem::path& path, const Waveform& w) {
  io::WriteFile(path.string(), EncodeWav(w));
}

void WriteFeatureCache(const std::filesystem::path& path, const Spectrogram& s) {
  io::ByteWriter out;
  out.Tag("LMFB");
  out.U32(kFeatureCacheVersion);
  out.U32(static_cast<std::uint32_t>(s.rows()));
  out.U32(static_cast<std::uint32_t>(s.cols()));
  for (Eigen::Index t = 0; t < s.rows(); ++t)
    for (Eigen::Index f = 0; f < s.cols(); ++f) out.F32(static_cast<float>(s(t, f)));
  io::WriteFile(path.string(), out.buffer());
}

Spectrogram ReadFeatureCache(const std::filesystem::path& path) {
  const auto bytes = io::ReadFile(path.string());
  io::ByteReader r(bytes, path.string());
  if (r.Str(4) != "LMFB") r.Fail("bad feature cache magic");
  if (r.U32() != kFeatureCacheVersion) r.Fail("unsupported feature cache version");
  const std::uint32_t rows = r.U32(), cols = r.U32();
  if (r.remaining() != static_cast<std::size_t>(rows) * cols * 4)
    r.Fail("feature cache size does not match header");
  Spectrogram s(rows, cols);
  for (std::uint32_t t = 0; t < rows; ++t)
    for (std::uint32_t f = 0; f < cols; ++f) s(t, f) = r.F32();
  return s;
}

}  // namespace nrser
