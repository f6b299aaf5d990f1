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

#include "msvq/quantizer.hpp"

#include <cmath>
#include <set>

#include "msvq/kernels.hpp"

namespace msvq {

namespace {
constexpr std::uint32_t kVersion = 1;

// Unit slots pass through untouched so that quantizing a quantized vector is exact.
void normalize_slot(std::span<double> slot) {
  const double n = norm(slot);
  if (std::abs(n - 1.0) <= 4e-16) return;
  l2_normalize_inplace(slot);
}

// Rows of the result are the unit-normalized slots of every input, sample-major.
Matrix split_slots(const Matrix& batch, std::size_t slots, std::size_t sub) {
  Matrix out(batch.rows * slots, sub);
  for (std::size_t i = 0; i < batch.rows; ++i) {
    auto z = batch.row(i);
    for (std::size_t h = 0; h < slots; ++h) {
      auto dst = out.row(i * slots + h);
      std::copy(z.begin() + h * sub, z.begin() + (h + 1) * sub, dst.begin());
      normalize_slot(dst);
    }
  }
  return out;
}
}  // namespace

CompositionalQuantizer::CompositionalQuantizer(Codebook codebook, std::size_t slots)
    : codebook_(std::move(codebook)), slots_(slots) {
  if (slots_ == 0) throw Error(ErrorKind::InvalidSpec, "quantizer needs at least one slot");
  if (codebook_.size() == 0) throw Error(ErrorKind::InvalidSpec, "quantizer needs a codebook");
}

QuantizeResult CompositionalQuantizer::quantize(std::span<const double> z) const {
  if (z.size() != dim()) throw Error(ErrorKind::DimMismatch, "embedding width differs from m * d*");
  const std::size_t sub = sub_dim();
  QuantizeResult res;
  res.codes.resize(slots_);
  res.quantized.resize(dim());
  res.normalized.assign(z.begin(), z.end());
  for (std::size_t h = 0; h < slots_; ++h) {
    std::span<double> slot(res.normalized.data() + h * sub, sub);
    normalize_slot(slot);
    const auto [k, d] = codebook_.nearest(slot);
    res.codes[h] = static_cast<std::uint32_t>(k);
    res.commit_sq_dist += d;
    auto e = codebook_.entry(k);
    std::copy(e.begin(), e.end(), res.quantized.begin() + h * sub);
  }
  return res;
}

BatchQuantizeResult CompositionalQuantizer::quantize_batch(const Matrix& batch) const {
  BatchQuantizeResult out;
  out.counts.assign(codebook_.size(), 0.0);
  if (batch.rows == 0) return out;
  if (batch.cols != dim()) throw Error(ErrorKind::DimMismatch, "batch width differs from m * d*");
  const std::size_t sub = sub_dim();
  const Matrix slots = split_slots(batch, slots_, sub);
  const auto nn = kernels::nearest(slots, codebook_.entries());

  out.results.resize(batch.rows);
  out.features.reserve(slots.rows);
  for (std::size_t i = 0; i < batch.rows; ++i) {
    QuantizeResult& res = out.results[i];
    res.codes.resize(slots_);
    res.quantized.resize(dim());
    res.normalized.resize(dim());
    for (std::size_t h = 0; h < slots_; ++h) {
      const std::size_t r = i * slots_ + h;
      const std::uint32_t k = nn.index[r];
      res.codes[h] = k;
      res.commit_sq_dist += nn.sq_dist[r];
      auto e = codebook_.entry(k);
      std::copy(e.begin(), e.end(), res.quantized.begin() + h * sub);
      auto s = slots.row(r);
      std::copy(s.begin(), s.end(), res.normalized.begin() + h * sub);
      Vec feature(s.begin(), s.end());
      out.assignments[k].push_back(feature);
      out.features.push_back(std::move(feature));
      out.counts[k] += 1.0;
    }
  }
  return out;
}

std::uint64_t CompositionalQuantizer::capacity() const {
  const std::uint64_t k = codebook_.size();
  std::uint64_t cap = 1;
  for (std::size_t h = 0; h < slots_; ++h) {
    if (k != 0 && cap > kCapacitySaturated / k) return kCapacitySaturated;
    cap *= k;
  }
  return cap;
}

void CompositionalQuantizer::write(io::Writer& w) const {
  w.magic("CBQZ");
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(slots_));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim()));
  codebook_.write(w);
}

CompositionalQuantizer CompositionalQuantizer::read(io::Reader& r) {
  r.expect_magic("CBQZ");
  if (r.get<std::uint32_t>() != kVersion) throw Error(ErrorKind::CorruptContainer, "quantizer version");
  const std::size_t m = r.get<std::uint32_t>();
  const std::size_t d = r.get<std::uint32_t>();
  Codebook cb = Codebook::read(r);
  if (m == 0 || d != m * cb.dim()) throw Error(ErrorKind::CorruptContainer, "quantizer geometry");
  return CompositionalQuantizer(std::move(cb), m);
}

io::Bytes CompositionalQuantizer::save() const {
  io::Writer w;
  write(w);
  return std::move(w).bytes();
}

CompositionalQuantizer CompositionalQuantizer::load(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  auto q = read(r);
  r.expect_end();
  return q;
}

std::size_t distinct_outputs(const CompositionalQuantizer& q, const Matrix& batch) {
  std::set<std::vector<std::uint32_t>> seen;
  for (const auto& res : q.quantize_batch(batch).results) seen.insert(res.codes);
  return seen.size();
}

const CompositionalQuantizer& ModalityCodebookSet::specific_for(std::size_t modality) const {
  auto it = specific.find(modality);
  if (it == specific.end()) throw Error(ErrorKind::MissingSpecific, "modality has no specific codebook");
  return it->second;
}

CompositionalQuantizer& ModalityCodebookSet::specific_for(std::size_t modality) {
  auto it = specific.find(modality);
  if (it == specific.end()) throw Error(ErrorKind::MissingSpecific, "modality has no specific codebook");
  return it->second;
}

}  // namespace msvq
