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

#include <cmath>
#include <vector>

#include "msvq/numerics.hpp"

namespace msvq::testing {

inline Vec random_vec(Rng& rng, std::size_t dim, double scale = 1.0) {
  Vec v(dim);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline Vec random_unit(Rng& rng, std::size_t dim) { return l2_normalize(random_vec(rng, dim)); }

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.data) x = scale * rng.normal();
  return m;
}

inline Matrix random_unit_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m = random_matrix(rng, rows, cols);
  for (std::size_t i = 0; i < rows; ++i) l2_normalize_inplace(m.row(i));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace msvq::testing
