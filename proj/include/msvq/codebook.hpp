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
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "msvq/binary_io.hpp"
#include "msvq/numerics.hpp"

namespace msvq {

// Features assigned to each codevector in one batch, keyed by entry index.
using Assignments = std::map<std::size_t, std::vector<Vec>>;

struct UsageStats {
  double usage_rate = 0.0;  // fraction of entries hit at least once
  double perplexity = 1.0;  // exp(entropy) of the empirical assignment distribution
};

UsageStats usage_stats(std::size_t num_entries, std::span<const std::size_t> assignments);

// A learnable set of unit-norm codevectors updated by exponential moving average
// (never by gradients), with usage-driven reinitialization of dead entries.
class Codebook {
 public:
  static constexpr double kDefaultDecay = 0.99;

  Codebook() = default;
  // Entries are l2-normalized; EMA state starts at zero.
  Codebook(std::span<const Vec> entries, double decay = kDefaultDecay);

  // Entries are the normalized k-means centroids of samples.
  static Codebook init_kmeans(std::span<const Vec> samples, std::size_t num_entries, double decay,
                              Rng& rng, std::size_t max_iter = 50);

  std::size_t size() const { return entries_.rows; }
  std::size_t dim() const { return entries_.cols; }
  double decay() const { return decay_; }
  std::uint64_t step() const { return step_; }

  const Matrix& entries() const { return entries_; }
  std::span<const double> entry(std::size_t k) const { return entries_.row(k); }
  const Vec& ema_counts() const { return counts_; }
  const Matrix& ema_sums() const { return sums_; }
  const Vec& usage() const { return usage_; }

  // argmin_k ||z - e_k||^2, smallest index on ties.
  std::pair<std::size_t, double> nearest(std::span<const double> z) const;

  // N_k <- g N_k + (1-g)|Z|, f_k <- g f_k + (1-g) sum Z, e_k <- normalize(f_k / N_k) for every
  // entry with a non-empty cluster. Idle entries are left untouched.
  void ema_update(const Assignments& assignments);

  // Per-entry reinitialization decay derived from the accumulated usage.
  Vec reinit_decay() const;

  // Folds the batch's usage into the accumulator, then pulls each entry toward a
  // randomly drawn batch feature by its decay: e <- (1-a) e + a z, renormalized.
  void reinit_dead(std::span<const Vec> batch_features, std::span<const double> batch_assign_counts,
                   Rng& rng);

  // e_k <- normalize(e_k - step * grad_k).
  void nudge(const Matrix& grad, double step);

  // Rounds entries to the precision they are checkpointed at.
  void round_to_f32();

  void write(io::Writer& w) const;
  static Codebook read(io::Reader& r);
  io::Bytes save() const;
  static Codebook load(std::span<const std::uint8_t> bytes);

  bool operator==(const Codebook&) const = default;

  // Direct state access for tests and diagnostics.
  Vec& mutable_usage() { return usage_; }

 private:
  Matrix entries_;
  Vec counts_;
  Matrix sums_;
  Vec usage_;
  double decay_ = kDefaultDecay;
  std::uint64_t step_ = 0;
};

}  // namespace msvq
