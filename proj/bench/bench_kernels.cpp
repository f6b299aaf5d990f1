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

// Serial vs OpenMP kernels: wall time per call and a bit-identity check.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "msvq/kernels.hpp"

using namespace msvq;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal();
  return m;
}

double seconds_per_call(const std::function<void()>& fn, double budget) {
  using clock = std::chrono::steady_clock;
  fn();  // warm-up
  std::size_t calls = 0;
  const auto start = clock::now();
  double elapsed = 0.0;
  do {
    fn();
    ++calls;
    elapsed = std::chrono::duration<double>(clock::now() - start).count();
  } while (elapsed < budget);
  return elapsed / static_cast<double>(calls);
}

void report(const char* name, double serial, double parallel, bool identical) {
  std::printf("%-16s serial %10.3f ms   omp %10.3f ms   speedup %5.2fx   %s\n", name, serial * 1e3, parallel * 1e3,
              serial / parallel, identical ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  std::size_t queries = 4096, entries = 1024, dim = 8, gram_rows = 1024, gram_dim = 64;
  double budget = 0.5;
  std::uint64_t seed = 1;
  app.add_option("--queries", queries, "rows searched against the codebook");
  app.add_option("--entries", entries, "codebook size");
  app.add_option("--dim", dim, "sub-vector width");
  app.add_option("--gram-rows", gram_rows, "rows of each Gram operand");
  app.add_option("--gram-dim", gram_dim, "columns of each Gram operand");
  app.add_option("--budget", budget, "seconds per measurement");
  app.add_option("--seed", seed, "input seed");
  CLI11_PARSE(app, argc, argv);

  Rng rng(seed);
  const Matrix q = random_matrix(rng, queries, dim), e = random_matrix(rng, entries, dim);
  const Matrix a = random_matrix(rng, gram_rows, gram_dim), b = random_matrix(rng, gram_rows, gram_dim);
  std::printf("threads %d  nearest %zux%zu vs %zu  gram %zux%zu\n", kernels::max_threads(), queries, dim, entries,
              gram_rows, gram_dim);

  {
    const auto s = kernels::serial::nearest(q, e);
    const auto p = kernels::omp::nearest(q, e);
    report("nearest", seconds_per_call([&] { kernels::serial::nearest(q, e); }, budget),
           seconds_per_call([&] { kernels::omp::nearest(q, e); }, budget),
           s.index == p.index && s.sq_dist == p.sq_dist);
  }
  report("gram", seconds_per_call([&] { kernels::serial::gram(a, b); }, budget),
         seconds_per_call([&] { kernels::omp::gram(a, b); }, budget),
         kernels::serial::gram(a, b) == kernels::omp::gram(a, b));
  report("sq_dist_matrix", seconds_per_call([&] { kernels::serial::sq_dist_matrix(a, b); }, budget),
         seconds_per_call([&] { kernels::omp::sq_dist_matrix(a, b); }, budget),
         kernels::serial::sq_dist_matrix(a, b) == kernels::omp::sq_dist_matrix(a, b));
  return 0;
}
