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
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "msvq/codebook.hpp"

namespace msvq {

struct QuantizeResult {
  std::vector<std::uint32_t> codes;  // one per slot
  Vec quantized;                     // concatenated unit codevectors, width d
  Vec normalized;                    // the input with every slot unit-normalized
  double commit_sq_dist = 0.0;       // sum over slots of ||slot - codevector||^2
};

struct BatchQuantizeResult {
  std::vector<QuantizeResult> results;
  // Normalized sub-vectors per selected entry, ready for Codebook::ema_update.
  Assignments assignments;
  // Per-entry hit counts and every normalized sub-vector in the batch, for reinit.
  Vec counts;
  std::vector<Vec> features;
};

// Splits a d-wide embedding into m contiguous slots of width d/m and quantizes every
// slot independently against one codebook, giving K^m representable outputs.
class CompositionalQuantizer {
 public:
  static constexpr std::uint64_t kCapacitySaturated = std::numeric_limits<std::uint64_t>::max();

  CompositionalQuantizer() = default;
  CompositionalQuantizer(Codebook codebook, std::size_t slots);

  std::size_t slots() const { return slots_; }
  std::size_t dim() const { return slots_ * codebook_.dim(); }
  std::size_t sub_dim() const { return codebook_.dim(); }

  const Codebook& codebook() const { return codebook_; }
  Codebook& codebook() { return codebook_; }

  QuantizeResult quantize(std::span<const double> z) const;
  BatchQuantizeResult quantize_batch(const Matrix& batch) const;

  // K^m, or kCapacitySaturated when it does not fit in 64 bits.
  std::uint64_t capacity() const;

  void write(io::Writer& w) const;
  static CompositionalQuantizer read(io::Reader& r);
  io::Bytes save() const;
  static CompositionalQuantizer load(std::span<const std::uint8_t> bytes);

  bool operator==(const CompositionalQuantizer&) const = default;

 private:
  Codebook codebook_;
  std::size_t slots_ = 1;
};

// Number of distinct code tuples produced over a set of inputs.
std::size_t distinct_outputs(const CompositionalQuantizer& q, const Matrix& batch);

// One shared quantizer for every modality of an alignment path, plus one specific
// quantizer per modality that carries a specific embedding (text has none).
struct ModalityCodebookSet {
  CompositionalQuantizer shared;
  std::map<std::size_t, CompositionalQuantizer> specific;

  bool has_specific(std::size_t modality) const { return specific.contains(modality); }
  const CompositionalQuantizer& specific_for(std::size_t modality) const;
  CompositionalQuantizer& specific_for(std::size_t modality);

  bool operator==(const ModalityCodebookSet&) const = default;
};

}  // namespace msvq
