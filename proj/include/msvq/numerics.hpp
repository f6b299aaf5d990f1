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

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "msvq/error.hpp"

namespace msvq {

using Vec = std::vector<double>;

// Dense row-major matrix; one row per sample.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(std::span<const Vec> rows);

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Vec row_vec(std::size_t i) const { return Vec(row(i).begin(), row(i).end()); }
  std::vector<Vec> to_rows() const;
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Matrix&) const = default;
};

// Portable seeded generator. The engine is std::mt19937_64, whose output sequence
// is fixed by the standard; the distributions below are hand-rolled because the
// standard library's are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0.
  std::size_t index(std::size_t n);
  double normal();
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }
  // Derive an independent child stream.
  Rng fork(std::uint64_t salt);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
double sq_dist(std::span<const double> a, std::span<const double> b);
Vec l2_normalize(std::span<const double> v);
void l2_normalize_inplace(std::span<double> v);
void check_finite(std::span<const double> v, const char* what);

// P(e_k | z) = softmax_k(-||z - e_k||^2), max-subtracted.
Vec softmin_dist(std::span<const double> z, std::span<const Vec> entries);

struct KMeansResult {
  std::vector<Vec> centroids;
  std::vector<std::size_t> assignment;
  // Within-cluster SSE after every assignment pass.
  std::vector<double> sse_history;
  std::size_t iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding drawn from rng. n_init independent
// seedings are run and the one with the lowest final SSE is kept.
KMeansResult kmeans_detailed(std::span<const Vec> points, std::size_t k, Rng& rng,
                             std::size_t max_iter, std::size_t n_init = 10);
std::vector<Vec> kmeans(std::span<const Vec> points, std::size_t k, Rng& rng,
                        std::size_t max_iter, std::size_t n_init = 10);

double within_cluster_sse(std::span<const Vec> points, std::span<const Vec> centroids);

}  // namespace msvq
