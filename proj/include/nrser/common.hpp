// nrser/common.hpp

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

#include <array>
#include <charconv>
#include <cstdio>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nrser {

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command line or configuration (CLI exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input data (CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or failed numerical checks (CLI exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kSampleRate = 16000;
inline constexpr int kNumMelBins = 80;
inline constexpr int kNumEmotions = 4;
inline constexpr double kLogFloor = 1e-10;

enum class Emotion : int { kAngry = 0, kHappy = 1, kNeutral = 2, kSad = 3 };

inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions = {
    Emotion::kAngry, Emotion::kHappy, Emotion::kNeutral, Emotion::kSad};

inline std::string_view ToString(Emotion e) {
  switch (e) {
    case Emotion::kAngry: return "angry";
    case Emotion::kHappy: return "happy";
    case Emotion::kNeutral: return "neutral";
    case Emotion::kSad: return "sad";
  }
  return "?";
}

inline Emotion EmotionFromString(std::string_view s) {
  for (Emotion e : kAllEmotions)
    if (ToString(e) == s) return e;
  throw DataError("unknown emotion class '" + std::string(s) + "'");
}

/// splitmix64 finalizer; derives independent sub-seeds from (seed, tag).
inline std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Shortest decimal form that round-trips ("5", "0.25").
inline std::string FormatDouble(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Fixed-point with `digits` decimals.
inline std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

/// FNV-1a over a string, used to turn ids into seed tags.
inline std::uint64_t HashString(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// FNV-1a over raw bytes (parameter checksums).
inline std::uint64_t HashBytes(const void* data, std::size_t n,
                               std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

const char* Version();

}  // namespace nrser
