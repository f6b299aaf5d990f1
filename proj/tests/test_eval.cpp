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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "msvq/eval.hpp"
#include "test_util.hpp"

using namespace msvq;
using msvq::testing::random_matrix;
using msvq::testing::random_unit_rows;

TEST_CASE("identical pairs give perfect recall") {
  Rng rng(1);
  Matrix a = random_unit_rows(rng, 16, 8);
  const std::size_t ks[] = {1, 5, 16};
  for (double r : paired_recall(a, a, ks)) CHECK(r == 1.0);
}

TEST_CASE("random pairs sit at the permutation baseline") {
  Rng rng(2);
  const std::size_t n = 20, trials = 400;
  const std::size_t ks[] = {1, 5, n};
  std::vector<double> mean(3, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    auto r = paired_recall(random_unit_rows(rng, n, 16), random_unit_rows(rng, n, 16), ks);
    CHECK(r[0] <= r[1]);
    CHECK(r[1] <= r[2]);
    CHECK(r[2] == 1.0);  // K = dataset size
    for (int k = 0; k < 3; ++k) mean[k] += r[k] / trials;
  }
  // 1/N and K/N, binomial standard error of the mean below 0.003.
  CHECK(std::abs(mean[0] - 1.0 / n) < 0.012);
  CHECK(std::abs(mean[1] - 5.0 / n) < 0.02);
}

TEST_CASE("ties never help a query") {
  Matrix same(4, 3, 0.0);
  for (std::size_t i = 0; i < 4; ++i) same(i, 0) = 1.0;
  const std::size_t ks[] = {1, 3, 4};
  auto r = paired_recall(same, same, ks);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 1.0);
}

TEST_CASE("zero-shot accuracy") {
  Rng rng(3);
  SUBCASE("single concept") {
    Matrix e = random_unit_rows(rng, 10, 8);
    std::vector<std::uint32_t> labels(10, 0);
    CHECK(zero_shot_accuracy(e, labels, random_unit_rows(rng, 1, 8)) == 1.0);
  }
  SUBCASE("class-mean prototypes beat chance, shuffled prototypes do not") {
    const std::size_t C = 8, per = 50, d = 16;
    Matrix centers = random_unit_rows(rng, C, d);
    Matrix e(C * per, d);
    std::vector<std::uint32_t> labels;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < per; ++j) {
        labels.push_back(static_cast<std::uint32_t>(c));
        for (std::size_t k = 0; k < d; ++k) e(c * per + j, k) = centers(c, k) + 0.3 * rng.normal();
      }
    Matrix protos(C, d);
    for (std::size_t i = 0; i < e.rows; ++i)
      for (std::size_t k = 0; k < d; ++k) protos(labels[i], k) += e(i, k) / per;
    CHECK(zero_shot_accuracy(e, labels, protos) > 1.0 / C);
    double shuffled = 0.0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
      std::vector<std::size_t> perm(C);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      Matrix p(C, d);
      for (std::size_t c = 0; c < C; ++c)
        std::copy(protos.row(perm[c]).begin(), protos.row(perm[c]).end(), p.row(c).begin());
      shuffled += zero_shot_accuracy(e, labels, p) / trials;
    }
    CHECK(std::abs(shuffled - 1.0 / C) < 0.05);
  }
  SUBCASE("missing prototype") {
    std::vector<std::uint32_t> labels{0, 3};
    try {
      zero_shot_accuracy(random_unit_rows(rng, 2, 4), labels, random_unit_rows(rng, 2, 4));
      FAIL("expected MissingPrototype");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MissingPrototype);
    }
  }
}

TEST_CASE("linear probe") {
  Rng rng(4);
  const std::size_t n = 200, d = 6;
  Matrix x = random_matrix(rng, n, d);
  std::vector<std::uint32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % 2;
    x(i, 0) += labels[i] ? 3.0 : -3.0;  // separable along the first axis
    if (labels[i] ? x(i, 0) < 0.5 : x(i, 0) > -0.5) x(i, 0) = labels[i] ? 1.0 : -1.0;
  }
  Rng probe_rng(5);
  CHECK(linear_probe_accuracy(x, labels, probe_rng) == 1.0);

  double shuffled = 0.0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    auto perm = labels;
    rng.shuffle(perm);
    Rng r(100 + t);
    shuffled += linear_probe_accuracy(x, perm, r) / trials;
  }
  CHECK(std::abs(shuffled - 0.5) < 0.08);

  std::vector<std::uint32_t> one(n, 0);
  try {
    linear_probe_accuracy(x, one, probe_rng);
    FAIL("expected DegenerateLabels");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateLabels);
  }
}

TEST_CASE("similarity statistics") {
  Rng rng(6);
  Matrix same(6, 4, 0.0);
  for (std::size_t i = 0; i < 6; ++i) same(i, 1) = 2.0;
  std::vector<std::uint32_t> labels{0, 0, 0, 1, 1, 1};
  auto s = similarity_stats(same, same, labels);
  CHECK(s.intra_shared == doctest::Approx(1.0));
  CHECK(s.intra_specific == doctest::Approx(1.0));
  CHECK(s.inter == doctest::Approx(1.0));
  auto r = similarity_stats(random_matrix(rng, 6, 4), random_matrix(rng, 6, 4), labels);
  for (double v : {r.intra_shared, r.intra_specific, r.inter}) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("fine-grained recall") {
  Rng rng(7);
  const std::size_t n = 40;
  Matrix sh = random_unit_rows(rng, n, 8), sp = random_unit_rows(rng, n, 8);
  std::vector<std::uint32_t> c(n), a(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = i % 4, a[i] = (i / 4) % 3;
  Matrix both = concat_columns(sh, sp);
  for (const Matrix* m : {&sh, &sp, &both}) {
    CHECK(fine_grained_recall(*m, c, a, *m, c, a, 10) == 1.0);
    double r = fine_grained_recall(*m, c, a, random_unit_rows(rng, n, m->cols), c, a, 10);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("episode retrieval on identical embeddings") {
  Rng rng(8);
  Matrix e = random_unit_rows(rng, 4 * 3, 8);
  auto r = retrieval_episodes(e, e, e, 4, 3);
  CHECK(r.target_to_text.r1 == 1.0);
  CHECK(r.bridge_to_target.r10 == 1.0);
}
