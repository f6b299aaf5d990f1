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

#include "msvq/kernels.hpp"

#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msvq::kernels {
namespace {

void require_cols(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw Error(ErrorKind::DimMismatch, "kernel operands differ in width");
}

inline void nearest_row(const Matrix& queries, const Matrix& entries, std::size_t i,
                        Nearest& out) {
  const double* q = queries.data.data() + i * queries.cols;
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_k = 0;
  for (std::size_t k = 0; k < entries.rows; ++k) {
    const double* e = entries.data.data() + k * entries.cols;
    double s = 0.0;
    for (std::size_t j = 0; j < entries.cols; ++j) {
      const double t = q[j] - e[j];
      s += t * t;
    }
    if (s < best) {
      best = s;
      best_k = static_cast<std::uint32_t>(k);
    }
  }
  out.index[i] = best_k;
  out.sq_dist[i] = best;
}

inline double row_dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

inline double row_sq_dist(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

Nearest make_nearest(const Matrix& queries, const Matrix& entries) {
  require_cols(queries, entries);
  if (entries.rows == 0) throw Error(ErrorKind::EmptyInput, "no entries to search");
  Nearest out;
  out.index.resize(queries.rows);
  out.sq_dist.resize(queries.rows);
  return out;
}

}  // namespace

namespace serial {

Nearest nearest(const Matrix& queries, const Matrix& entries) {
  Nearest out = make_nearest(queries, entries);
  for (std::size_t i = 0; i < queries.rows; ++i) nearest_row(queries, entries, i, out);
  return out;
}

Matrix gram(const Matrix& a, const Matrix& b) {
  require_cols(a, b);
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j)
      out(i, j) = row_dot(&a.data[i * a.cols], &b.data[j * b.cols], a.cols);
  return out;
}

Matrix sq_dist_matrix(const Matrix& a, const Matrix& b) {
  require_cols(a, b);
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j)
      out(i, j) = row_sq_dist(&a.data[i * a.cols], &b.data[j * b.cols], a.cols);
  return out;
}

}  // namespace serial

namespace omp {

Nearest nearest(const Matrix& queries, const Matrix& entries) {
  Nearest out = make_nearest(queries, entries);
  const auto n = static_cast<std::ptrdiff_t>(queries.rows);
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    nearest_row(queries, entries, static_cast<std::size_t>(i), out);
  return out;
}

Matrix gram(const Matrix& a, const Matrix& b) {
  require_cols(a, b);
  Matrix out(a.rows, b.rows);
  const auto n = static_cast<std::ptrdiff_t>(a.rows);
#pragma omp parallel for schedule(static) if (n * b.rows > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < b.rows; ++j)
      out(i, j) = row_dot(&a.data[i * a.cols], &b.data[j * b.cols], a.cols);
  return out;
}

Matrix sq_dist_matrix(const Matrix& a, const Matrix& b) {
  require_cols(a, b);
  Matrix out(a.rows, b.rows);
  const auto n = static_cast<std::ptrdiff_t>(a.rows);
#pragma omp parallel for schedule(static) if (n * b.rows > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < b.rows; ++j)
      out(i, j) = row_sq_dist(&a.data[i * a.cols], &b.data[j * b.cols], a.cols);
  return out;
}

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace msvq::kernels
