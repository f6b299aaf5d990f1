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

#include "msvq/codebook.hpp"

#include <cmath>

namespace msvq {

namespace {
constexpr std::uint32_t kVersion = 1;

void check_decay(double decay) {
  if (!(decay > 0.0 && decay < 1.0)) throw Error(ErrorKind::InvalidSpec, "decay must lie in (0, 1)");
}
}  // namespace

UsageStats usage_stats(std::size_t num_entries, std::span<const std::size_t> assignments) {
  if (assignments.empty()) throw Error(ErrorKind::EmptyInput, "usage over no assignments");
  std::vector<std::size_t> hits(num_entries, 0);
  for (std::size_t a : assignments) {
    if (a >= num_entries) throw Error(ErrorKind::DimMismatch, "assignment out of range");
    ++hits[a];
  }
  std::size_t used = 0;
  double entropy = 0.0;
  const double total = static_cast<double>(assignments.size());
  for (std::size_t h : hits) {
    if (h == 0) continue;
    ++used;
    const double p = static_cast<double>(h) / total;
    entropy -= p * std::log(p);
  }
  return {static_cast<double>(used) / static_cast<double>(num_entries), std::exp(entropy)};
}

Codebook::Codebook(std::span<const Vec> entries, double decay)
    : entries_(Matrix::from_rows(entries)), decay_(decay) {
  check_decay(decay);
  if (entries_.rows == 0 || entries_.cols == 0)
    throw Error(ErrorKind::EmptyInput, "codebook needs at least one non-empty entry");
  for (std::size_t k = 0; k < entries_.rows; ++k) l2_normalize_inplace(entries_.row(k));
  counts_.assign(entries_.rows, 0.0);
  sums_ = Matrix(entries_.rows, entries_.cols);
  usage_.assign(entries_.rows, 0.0);
}

Codebook Codebook::init_kmeans(std::span<const Vec> samples, std::size_t num_entries, double decay,
                               Rng& rng, std::size_t max_iter) {
  if (samples.empty()) throw Error(ErrorKind::EmptyInput, "codebook init from no samples");
  return Codebook(kmeans(samples, num_entries, rng, max_iter), decay);
}

std::pair<std::size_t, double> Codebook::nearest(std::span<const double> z) const {
  if (z.size() != dim()) throw Error(ErrorKind::DimMismatch, "query width differs from codebook");
  std::size_t best = 0;
  double best_d = sq_dist(z, entries_.row(0));
  for (std::size_t k = 1; k < size(); ++k) {
    const double d = sq_dist(z, entries_.row(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return {best, best_d};
}

void Codebook::ema_update(const Assignments& assignments) {
  for (const auto& [k, cluster] : assignments) {
    if (k >= size()) throw Error(ErrorKind::DimMismatch, "assignment to missing entry");
    for (const Vec& z : cluster)
      if (z.size() != dim()) throw Error(ErrorKind::DimMismatch, "assigned feature width");
  }
  const double g = decay_;
  for (const auto& [k, cluster] : assignments) {
    if (cluster.empty()) continue;
    Vec batch_sum(dim(), 0.0);
    for (const Vec& z : cluster)
      for (std::size_t j = 0; j < dim(); ++j) batch_sum[j] += z[j];
    counts_[k] = g * counts_[k] + (1.0 - g) * static_cast<double>(cluster.size());
    auto f = sums_.row(k);
    for (std::size_t j = 0; j < dim(); ++j) f[j] = g * f[j] + (1.0 - g) * batch_sum[j];
    if (counts_[k] <= 1e-12) continue;
    Vec e(dim());
    for (std::size_t j = 0; j < dim(); ++j) e[j] = f[j] / counts_[k];
    if (norm(e) < 1e-30) continue;
    l2_normalize_inplace(e);
    std::copy(e.begin(), e.end(), entries_.row(k).begin());
  }
  ++step_;
}

Vec Codebook::reinit_decay() const {
  const double scale = static_cast<double>(size()) * 10.0 / (1.0 - decay_);
  Vec alpha(size());
  for (std::size_t k = 0; k < size(); ++k) alpha[k] = std::exp(-usage_[k] * scale - 1e-3);
  return alpha;
}

void Codebook::reinit_dead(std::span<const Vec> batch_features,
                           std::span<const double> batch_assign_counts, Rng& rng) {
  if (batch_features.empty()) throw Error(ErrorKind::EmptyInput, "reinit needs batch features");
  if (batch_assign_counts.size() != size())
    throw Error(ErrorKind::DimMismatch, "one assignment count per entry expected");
  for (const Vec& z : batch_features)
    if (z.size() != dim()) throw Error(ErrorKind::DimMismatch, "anchor width");

  double total = 0.0;
  for (double c : batch_assign_counts) total += c;
  for (std::size_t k = 0; k < size(); ++k) {
    const double avg = total > 0.0 ? batch_assign_counts[k] / total : 0.0;
    usage_[k] = decay_ * usage_[k] + (1.0 - decay_) * avg;
  }
  const Vec alpha = reinit_decay();
  for (std::size_t k = 0; k < size(); ++k) {
    const Vec& anchor = batch_features[rng.index(batch_features.size())];
    const double a = alpha[k];
    if (a == 0.0) continue;
    auto e = entries_.row(k);
    Vec moved(dim());
    for (std::size_t j = 0; j < dim(); ++j) moved[j] = (1.0 - a) * e[j] + a * anchor[j];
    if (norm(moved) < 1e-12) continue;
    l2_normalize_inplace(moved);
    std::copy(moved.begin(), moved.end(), e.begin());
  }
}

void Codebook::nudge(const Matrix& grad, double step) {
  if (!grad.same_shape(entries_)) throw Error(ErrorKind::ShapeMismatch, "nudge gradient shape");
  for (std::size_t k = 0; k < size(); ++k) {
    Vec moved(dim());
    auto e = entries_.row(k);
    auto g = grad.row(k);
    for (std::size_t j = 0; j < dim(); ++j) moved[j] = e[j] - step * g[j];
    if (norm(moved) < 1e-12) continue;
    l2_normalize_inplace(moved);
    std::copy(moved.begin(), moved.end(), e.begin());
  }
}

void Codebook::round_to_f32() {
  for (double& x : entries_.data) x = static_cast<double>(static_cast<float>(x));
}

void Codebook::write(io::Writer& w) const {
  w.magic("CBCB");
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim()));
  w.put<double>(decay_);
  w.put<std::uint64_t>(step_);
  for (double x : entries_.data) w.put<float>(static_cast<float>(x));
  for (double x : counts_) w.put<double>(x);
  for (double x : sums_.data) w.put<double>(x);
  for (double x : usage_) w.put<double>(x);
}

Codebook Codebook::read(io::Reader& r) {
  r.expect_magic("CBCB");
  if (r.get<std::uint32_t>() != kVersion) throw Error(ErrorKind::CorruptContainer, "codebook version");
  const std::size_t k = r.get<std::uint32_t>();
  const std::size_t d = r.get<std::uint32_t>();
  if (k == 0 || d == 0) throw Error(ErrorKind::CorruptContainer, "empty codebook header");
  // Bound the allocation by what the stream can actually hold.
  const std::size_t need = 8 + 8 + k * d * 4 + k * 8 + k * d * 8 + k * 8;
  if (r.remaining() < need) throw Error(ErrorKind::CorruptContainer, "truncated codebook");
  Codebook cb;
  cb.decay_ = r.get<double>();
  if (!(cb.decay_ > 0.0 && cb.decay_ < 1.0)) throw Error(ErrorKind::CorruptContainer, "codebook decay");
  cb.step_ = r.get<std::uint64_t>();
  cb.entries_ = Matrix(k, d);
  for (double& x : cb.entries_.data) x = r.get<float>();
  cb.counts_.resize(k);
  for (double& x : cb.counts_) x = r.get<double>();
  cb.sums_ = Matrix(k, d);
  for (double& x : cb.sums_.data) x = r.get<double>();
  cb.usage_.resize(k);
  for (double& x : cb.usage_) x = r.get<double>();
  return cb;
}

io::Bytes Codebook::save() const {
  io::Writer w;
  write(w);
  return std::move(w).bytes();
}

Codebook Codebook::load(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  Codebook cb = read(r);
  r.expect_end();
  return cb;
}

}  // namespace msvq
