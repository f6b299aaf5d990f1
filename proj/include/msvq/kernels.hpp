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
#include <span>
#include <vector>

#include "msvq/numerics.hpp"

// Data-parallel inner loops. Each kernel has a serial reference and an OpenMP
// variant; both compute every output element with the same instruction sequence,
// so their results are bit-identical and the serial one serves as a test oracle.
namespace msvq::kernels {

struct Nearest {
  std::vector<std::uint32_t> index;
  std::vector<double> sq_dist;
};

namespace serial {
// Row-wise argmin of squared distance to entries; ties go to the smallest index.
Nearest nearest(const Matrix& queries, const Matrix& entries);
// a * b^T.
Matrix gram(const Matrix& a, const Matrix& b);
Matrix sq_dist_matrix(const Matrix& a, const Matrix& b);
}  // namespace serial

namespace omp {
Nearest nearest(const Matrix& queries, const Matrix& entries);
Matrix gram(const Matrix& a, const Matrix& b);
Matrix sq_dist_matrix(const Matrix& a, const Matrix& b);
}  // namespace omp

inline Nearest nearest(const Matrix& queries, const Matrix& entries) {
  return omp::nearest(queries, entries);
}
inline Matrix gram(const Matrix& a, const Matrix& b) { return omp::gram(a, b); }
inline Matrix sq_dist_matrix(const Matrix& a, const Matrix& b) {
  return omp::sq_dist_matrix(a, b);
}

int max_threads();

}  // namespace msvq::kernels
