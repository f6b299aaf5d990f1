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

#include "msvq/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "msvq/kernels.hpp"

namespace msvq {

Matrix Matrix::from_rows(std::span<const Vec> rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols) throw Error(ErrorKind::DimMismatch, "ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

std::vector<Vec> Matrix::to_rows() const {
  std::vector<Vec> out;
  out.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) out.push_back(row_vec(i));
  return out;
}

std::size_t Rng::index(std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  // Box-Muller; u1 in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::fork(std::uint64_t salt) { return Rng(mix_seed(engine_(), salt)); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimMismatch, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double sq_dist(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimMismatch, "sq_dist");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

void l2_normalize_inplace(std::span<double> v) {
  const double n = norm(v);
  if (!(n >= 1e-30)) throw Error(ErrorKind::ZeroVector, "cannot normalize a zero vector");
  for (double& x : v) x /= n;
}

Vec l2_normalize(std::span<const double> v) {
  Vec out(v.begin(), v.end());
  l2_normalize_inplace(out);
  return out;
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorKind::InvalidSpec, std::string("non-finite value in ") + what);
}

Vec softmin_dist(std::span<const double> z, std::span<const Vec> entries) {
  if (entries.empty()) throw Error(ErrorKind::EmptyInput, "softmin over no entries");
  Vec logits(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) logits[k] = -sq_dist(z, entries[k]);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    total += l;
  }
  for (double& l : logits) l /= total;
  return logits;
}

double within_cluster_sse(std::span<const Vec> points, std::span<const Vec> centroids) {
  const auto nn = kernels::nearest(Matrix::from_rows(points), Matrix::from_rows(centroids));
  double s = 0.0;
  for (double d : nn.sq_dist) s += d;
  return s;
}

namespace {

std::size_t count_distinct(std::span<const Vec> points) {
  std::vector<const Vec*> ptrs;
  ptrs.reserve(points.size());
  for (const auto& p : points) ptrs.push_back(&p);
  std::sort(ptrs.begin(), ptrs.end(), [](const Vec* a, const Vec* b) { return *a < *b; });
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < ptrs.size(); ++i)
    if (i == 0 || *ptrs[i] != *ptrs[i - 1]) ++distinct;
  return distinct;
}

Matrix seed_plus_plus(const Matrix& pts, std::size_t k, Rng& rng) {
  const std::size_t n = pts.rows;
  Matrix centers(k, pts.cols);
  std::size_t first = rng.index(n);
  std::copy(pts.row(first).begin(), pts.row(first).end(), centers.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(pts.row(i), centers.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    std::copy(pts.row(pick).begin(), pts.row(pick).end(), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(pts.row(i), centers.row(c)));
  }
  return centers;
}

// Means of the current assignment; an empty cluster takes the point farthest from
// its own centroid among clusters that can spare one.
void update_means(const Matrix& pts, std::vector<std::size_t>& assign, Matrix& centers) {
  const std::size_t k = centers.rows, dim = pts.cols;
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t a : assign) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = pts.rows;
    double far_d = -1.0;
    for (std::size_t i = 0; i < pts.rows; ++i) {
      if (counts[assign[i]] < 2) continue;
      const double d = sq_dist(pts.row(i), centers.row(assign[i]));
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == pts.rows) break;
    --counts[assign[far]];
    assign[far] = c;
    counts[c] = 1;
  }
  Matrix sums(k, dim);
  for (std::size_t i = 0; i < pts.rows; ++i) {
    auto s = sums.row(assign[i]);
    auto p = pts.row(i);
    for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    auto s = sums.row(c);
    auto dst = centers.row(c);
    for (std::size_t j = 0; j < dim; ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
  }
}

// One sweep of Hartigan's single-point moves: x leaves cluster a for b when
// n_b/(n_b+1) ||x-c_b||^2 < n_a/(n_a-1) ||x-c_a||^2, which strictly lowers the SSE.
// Escapes Lloyd fixed points that are not local optima under single moves.
bool hartigan_sweep(const Matrix& pts, std::vector<std::size_t>& assign, Matrix& centers) {
  const std::size_t k = centers.rows, dim = pts.cols;
  std::vector<double> counts(k, 0.0);
  for (std::size_t a : assign) counts[a] += 1.0;
  bool moved = false;
  for (std::size_t i = 0; i < pts.rows; ++i) {
    const std::size_t a = assign[i];
    if (counts[a] < 2.0) continue;
    auto x = pts.row(i);
    const double leave = counts[a] / (counts[a] - 1.0) * sq_dist(x, centers.row(a));
    std::size_t best = a;
    double best_cost = leave;
    for (std::size_t b = 0; b < k; ++b) {
      if (b == a) continue;
      const double join = counts[b] / (counts[b] + 1.0) * sq_dist(x, centers.row(b));
      if (join < best_cost * (1.0 - 1e-12)) {
        best_cost = join;
        best = b;
      }
    }
    if (best == a) continue;
    auto ca = centers.row(a);
    auto cb = centers.row(best);
    for (std::size_t j = 0; j < dim; ++j) {
      ca[j] = (ca[j] * counts[a] - x[j]) / (counts[a] - 1.0);
      cb[j] = (cb[j] * counts[best] + x[j]) / (counts[best] + 1.0);
    }
    counts[a] -= 1.0;
    counts[best] += 1.0;
    assign[i] = best;
    moved = true;
  }
  return moved;
}

KMeansResult lloyd(const Matrix& pts, std::size_t k_fit, Rng& rng, std::size_t max_iter) {
  KMeansResult res;
  Matrix centers = seed_plus_plus(pts, k_fit, rng);
  std::vector<std::size_t> assign(pts.rows, 0);
  for (std::size_t iter = 0; iter <= max_iter; ++iter) {
    const auto nn = kernels::nearest(pts, centers);
    bool changed = iter == 0;
    double sse = 0.0;
    for (std::size_t i = 0; i < pts.rows; ++i) {
      if (assign[i] != nn.index[i]) changed = true;
      assign[i] = nn.index[i];
      sse += nn.sq_dist[i];
    }
    res.sse_history.push_back(sse);
    res.iterations = iter;
    if (iter == max_iter) break;
    if (!changed && !hartigan_sweep(pts, assign, centers)) break;
    update_means(pts, assign, centers);
  }

  res.centroids = centers.to_rows();
  res.assignment = std::move(assign);
  return res;
}

}  // namespace

KMeansResult kmeans_detailed(std::span<const Vec> points, std::size_t k, Rng& rng,
                             std::size_t max_iter, std::size_t n_init) {
  if (points.empty()) throw Error(ErrorKind::EmptyInput, "kmeans on no points");
  if (k == 0) throw Error(ErrorKind::EmptyInput, "kmeans with k = 0");
  const Matrix pts = Matrix::from_rows(points);
  for (const auto& p : points) check_finite(p, "kmeans input");

  const std::size_t distinct = count_distinct(points);
  const std::size_t k_fit = std::min(k, distinct);

  KMeansResult res = lloyd(pts, k_fit, rng, max_iter);
  for (std::size_t r = 1; r < n_init; ++r) {
    KMeansResult other = lloyd(pts, k_fit, rng, max_iter);
    if (other.sse_history.back() < res.sse_history.back()) res = std::move(other);
  }
  // More centroids requested than distinct points: jittered duplicates.
  for (std::size_t c = k_fit; c < k; ++c) {
    Vec dup = res.centroids[c % k_fit];
    for (double& x : dup) x += 1e-6 * rng.normal();
    res.centroids.push_back(std::move(dup));
  }
  return res;
}

std::vector<Vec> kmeans(std::span<const Vec> points, std::size_t k, Rng& rng,
                        std::size_t max_iter, std::size_t n_init) {
  return kmeans_detailed(points, k, rng, max_iter, n_init).centroids;
}

}  // namespace msvq
