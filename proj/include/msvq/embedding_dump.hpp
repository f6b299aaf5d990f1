// Copyright 2026 The msvq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "msvq/binary_io.hpp"
#include "msvq/numerics.hpp"

namespace msvq {

struct EmbeddingRecord {
  std::uint32_t label = 0;  // concept id
  std::uint8_t modality = 0;
  Vec shared;
  std::optional<Vec> specific;
  std::vector<std::uint32_t> shared_codes;    // present when the dump carries codes
  std::vector<std::uint32_t> specific_codes;  // likewise, for records with a specific vector
  bool operator==(const EmbeddingRecord&) const = default;
};

// Container "CBEM": version, d, codes per vector (0 when absent), record count, then per
// record: concept u32, modality u8, has-specific u8, shared f32 x d, [specific f32 x d],
// [shared codes u32 x m], [specific codes u32 x m].
struct EmbeddingDump {
  std::uint32_t dim = 0;
  std::uint32_t codes_per_vector = 0;
  std::vector<EmbeddingRecord> records;

  io::Bytes save() const;
  static EmbeddingDump load(std::span<const std::uint8_t> bytes);
  // Vectors rounded to their stored precision.
  void round_to_f32();

  bool operator==(const EmbeddingDump&) const = default;
};

}  // namespace msvq
