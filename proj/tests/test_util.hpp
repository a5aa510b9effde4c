// tests/test_util.hpp
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

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "nrser/corpus.hpp"
#include "nrser/dsp.hpp"

namespace nrser::testing {

/// Fresh directory under the gtest temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::path(::testing::TempDir()) /
            ("nrser_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Waveform Sine(double hz, double seconds, double amplitude = 0.5) {
  std::vector<double> x(static_cast<std::size_t>(seconds * kSampleRate));
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate);
  return Waveform(std::move(x));
}

inline Waveform RandomWaveform(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return Waveform(std::move(x));
}

/// Direct DFT magnitude at frequency hz over samples [begin, end).
inline double DftMagnitude(std::span<const double> x, double hz, std::size_t begin,
                           std::size_t end) {
  std::complex<double> acc = 0;
  for (std::size_t n = begin; n < end; ++n)
    acc += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * hz * static_cast<double>(n) /
                                      kSampleRate);
  return std::abs(acc);
}

/// Frequency in [lo, hi] with the largest direct-DFT magnitude (1 Hz grid).
inline double DominantFrequency(const Waveform& w, double lo, double hi, std::size_t begin) {
  double best = lo, best_mag = -1;
  for (double f = lo; f <= hi; f += 1.0) {
    const double m = DftMagnitude(w.samples(), f, begin, w.size());
    if (m > best_mag) {
      best_mag = m;
      best = f;
    }
  }
  return best;
}

/// Small corpus for pipeline tests: `sessions` sessions of two speakers,
/// `per_class` 1 s utterances per speaker and class, two noises per kind.
inline Manifest TinyCorpus(const std::filesystem::path& dir, int sessions = 2, int per_class = 1,
                           std::uint64_t seed = 0) {
  CorpusConfig cfg;
  cfg.sessions = sessions;
  cfg.utterances_per_speaker_per_class = per_class;
  cfg.noises_per_kind = 2;
  cfg.min_duration_s = 1.0;
  cfg.max_duration_s = 1.0;
  cfg.noise_duration_s = 2.0;
  cfg.seed = seed;
  return BuildCorpus(cfg, dir);
}

}  // namespace nrser::testing
