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

#include "msvq/embedding_dump.hpp"

namespace msvq {

namespace {

constexpr char kMagic[] = "CBEM";
constexpr std::uint32_t kVersion = 1;

void put_vec(io::Writer& w, const Vec& v) {
  for (double x : v) w.put<float>(static_cast<float>(x));
}

Vec get_vec(io::Reader& r, std::size_t d) {
  Vec v(d);
  for (double& x : v) x = r.get<float>();
  return v;
}

}  // namespace

io::Bytes EmbeddingDump::save() const {
  io::Writer w;
  w.magic(kMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(dim);
  w.put<std::uint32_t>(codes_per_vector);
  w.put<std::uint64_t>(records.size());
  for (const auto& rec : records) {
    if (rec.shared.size() != dim || (rec.specific && rec.specific->size() != dim))
      throw Error(ErrorKind::DimMismatch, "record width differs from the dump width");
    if (rec.shared_codes.size() != codes_per_vector ||
        rec.specific_codes.size() != (rec.specific ? codes_per_vector : 0))
      throw Error(ErrorKind::DimMismatch, "record code count differs from the dump header");
    w.put<std::uint32_t>(rec.label);
    w.put<std::uint8_t>(rec.modality);
    w.put<std::uint8_t>(rec.specific ? 1 : 0);
    put_vec(w, rec.shared);
    if (rec.specific) put_vec(w, *rec.specific);
    for (auto c : rec.shared_codes) w.put<std::uint32_t>(c);
    for (auto c : rec.specific_codes) w.put<std::uint32_t>(c);
  }
  return std::move(w).bytes();
}

EmbeddingDump EmbeddingDump::load(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic(kMagic);
  if (r.get<std::uint32_t>() != kVersion) throw Error(ErrorKind::CorruptContainer, "unsupported dump version");
  EmbeddingDump d;
  d.dim = r.get<std::uint32_t>();
  d.codes_per_vector = r.get<std::uint32_t>();
  auto count = r.get<std::uint64_t>();
  if (d.dim == 0 || d.dim > (1u << 20) || d.codes_per_vector > d.dim)
    throw Error(ErrorKind::CorruptContainer, "implausible dump header");
  const std::size_t min_record = 6 + 4 * (d.dim + d.codes_per_vector);
  if (count > r.remaining() / min_record) throw Error(ErrorKind::CorruptContainer, "record count exceeds payload");
  d.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord rec;
    rec.label = r.get<std::uint32_t>();
    rec.modality = r.get<std::uint8_t>();
    auto has_spec = r.get<std::uint8_t>();
    if (has_spec > 1) throw Error(ErrorKind::CorruptContainer, "bad record flag");
    rec.shared = get_vec(r, d.dim);
    if (has_spec) rec.specific = get_vec(r, d.dim);
    for (std::uint32_t c = 0; c < d.codes_per_vector; ++c) rec.shared_codes.push_back(r.get<std::uint32_t>());
    if (has_spec)
      for (std::uint32_t c = 0; c < d.codes_per_vector; ++c) rec.specific_codes.push_back(r.get<std::uint32_t>());
    d.records.push_back(std::move(rec));
  }
  r.expect_end();
  return d;
}

void EmbeddingDump::round_to_f32() {
  auto round = [](Vec& v) {
    for (double& x : v) x = static_cast<float>(x);
  };
  for (auto& rec : records) {
    round(rec.shared);
    if (rec.specific) round(*rec.specific);
  }
}

}  // namespace msvq
