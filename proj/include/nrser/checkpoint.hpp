// nrser/checkpoint.hpp
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

// Binary parameter archive:
//   "TRNC" | u32 version | u32 block count |
//   per block: u32 name length | name bytes | u32 rank | u32 dims[rank] |
//              f64 values (little-endian, row-major)

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nrser/autograd.hpp"

namespace nrser {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ag::Tensor value;
};

std::vector<std::uint8_t> EncodeCheckpoint(const std::vector<NamedTensor>& blocks);
std::vector<NamedTensor> DecodeCheckpoint(std::span<const std::uint8_t> bytes);
void SaveCheckpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& blocks);
std::vector<NamedTensor> LoadCheckpoint(const std::filesystem::path& path);

/// Hash of names, shapes and values.
std::uint64_t ChecksumOf(const std::vector<NamedTensor>& blocks);

}  // namespace nrser
