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

#include "doctest.h"
#include "msvq/kernels.hpp"
#include "test_util.hpp"

using namespace msvq;

TEST_CASE("OpenMP kernels are bit-identical to the serial reference") {
  Rng rng(1);
  const Matrix q = msvq::testing::random_matrix(rng, 513, 8);
  const Matrix e = msvq::testing::random_matrix(rng, 64, 8);
  const auto a = kernels::serial::nearest(q, e);
  const auto b = kernels::omp::nearest(q, e);
  CHECK(a.index == b.index);
  CHECK(a.sq_dist == b.sq_dist);
  CHECK(kernels::serial::gram(q, e) == kernels::omp::gram(q, e));
  CHECK(kernels::serial::sq_dist_matrix(q, e) == kernels::omp::sq_dist_matrix(q, e));
}

TEST_CASE("nearest breaks ties toward the smallest index") {
  Matrix e(3, 2);
  e(0, 0) = 1;
  e(1, 1) = 1;
  e(2, 0) = 1;  // duplicate of entry 0
  Matrix q(1, 2);
  q(0, 0) = 0.5;
  q(0, 1) = 0.5;  // equidistant from all three
  CHECK(kernels::serial::nearest(q, e).index[0] == 0);
  CHECK(kernels::omp::nearest(q, e).index[0] == 0);
}

TEST_CASE("gram and distance matrices agree with scalar helpers") {
  Rng rng(2);
  const Matrix a = msvq::testing::random_matrix(rng, 5, 3);
  const Matrix b = msvq::testing::random_matrix(rng, 4, 3);
  const Matrix g = kernels::gram(a, b);
  const Matrix d = kernels::sq_dist_matrix(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(g(i, j) == doctest::Approx(dot(a.row(i), b.row(j))).epsilon(1e-14));
      CHECK(d(i, j) == sq_dist(a.row(i), b.row(j)));
    }
  CHECK_THROWS_AS(kernels::gram(a, Matrix(2, 2)), Error);
}
