// src/checkpoint.cpp
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

#include "nrser/checkpoint.hpp"

#include "binary_io.hpp"

namespace nrser {

std::vector<std::uint8_t> EncodeCheckpoint(const std::vector<NamedTensor>& blocks) {
  io::ByteWriter out;
  out.Tag("TRNC");
  out.U32(kCheckpointVersion);
  out.U32(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    out.U32(static_cast<std::uint32_t>(b.name.size()));
    out.Bytes(b.name.data(), b.name.size());
    out.U32(static_cast<std::uint32_t>(b.value.rank()));
    for (std::size_t d : b.value.shape()) out.U32(static_cast<std::uint32_t>(d));
    for (double v : b.value.values()) out.F64(v);
  }
  return std::move(out.buffer());
}

std::vector<NamedTensor> DecodeCheckpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "checkpoint");
  if (r.Str(4) != "TRNC") r.Fail("bad magic");
  if (r.U32() != kCheckpointVersion) r.Fail("unsupported version");
  const std::uint32_t count = r.U32();
  std::vector<NamedTensor> blocks;
  blocks.reserve(count);
  for (std::uint32_t b = 0; b < count; ++b) {
    NamedTensor t;
    t.name = r.Str(r.U32());
    const std::uint32_t rank = r.U32();
    ag::Shape shape(rank);
    for (auto& d : shape) d = r.U32();
    std::vector<double> values(ag::NumElements(shape));
    if (r.remaining() < values.size() * 8) r.Fail("truncated block '" + t.name + "'");
    for (double& v : values) v = r.F64();
    t.value = ag::Tensor(std::move(shape), std::move(values));
    blocks.push_back(std::move(t));
  }
  if (r.remaining() != 0) r.Fail("trailing bytes");
  return blocks;
}

void SaveCheckpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& blocks) {
  io::WriteFile(path.string(), EncodeCheckpoint(blocks));
}

std::vector<NamedTensor> LoadCheckpoint(const std::filesystem::path& path) {
  return DecodeCheckpoint(io::ReadFile(path.string()));
}

std::uint64_t ChecksumOf(const std::vector<NamedTensor>& blocks) {
  const auto bytes = EncodeCheckpoint(blocks);
  return HashBytes(bytes.data(), bytes.size());
}

}  // namespace nrser
