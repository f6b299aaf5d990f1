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

#include "msvq/synthetic.hpp"

#include <cmath>

namespace msvq {

namespace {

// Entries N(0, 1 / (rows * cols)): a standard-normal latent renders with unit expected energy.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows * cols));
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

void mat_vec_add(const Matrix& m, const Vec& v, std::span<double> out) {
  for (std::size_t i = 0; i < m.rows; ++i) out[i] += dot(m.row(i), v);
}

Vec normal_vec(Rng& rng, std::size_t n) {
  Vec v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.concepts == 0 || spec.samples_per_concept == 0)
    throw Error(ErrorKind::InvalidSpec, "concepts and samples per concept must be positive");
  if (spec.shared_dim == 0 || spec.spec_dim == 0)
    throw Error(ErrorKind::InvalidSpec, "latent dimensions must be positive");
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise))
    throw Error(ErrorKind::InvalidSpec, "noise must be finite and non-negative");
  if (spec.modalities.empty()) throw Error(ErrorKind::InvalidSpec, "no modalities");
  for (const auto& m : spec.modalities) {
    if (m.obs_dim < spec.shared_dim)
      throw Error(ErrorKind::InvalidSpec, "observation width below the shared latent width");
  }
}

SyntheticWorld make_world(const SyntheticSpec& spec) {
  validate(spec);
  SyntheticWorld w;
  w.spec = spec;
  Rng rng(mix_seed(spec.seed, 0x5e7));
  for (const auto& m : spec.modalities) {
    w.mix_shared.push_back(gaussian_matrix(rng, m.obs_dim, spec.shared_dim));
    w.mix_spec.push_back(m.has_specific ? gaussian_matrix(rng, m.obs_dim, spec.spec_dim)
                                        : Matrix(m.obs_dim, spec.spec_dim));
  }
  w.concept_latents = Matrix(spec.concepts, spec.shared_dim);
  for (double& v : w.concept_latents.data) v = rng.normal();
  return w;
}

Dataset generate(const SyntheticSpec& spec, Split split) { return generate(make_world(spec), split); }

Dataset generate(const SyntheticWorld& world, Split split) {
  const auto& spec = world.spec;
  Dataset ds;
  ds.world = world;
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(split)));
  const std::size_t M = spec.modalities.size();
  for (std::size_t c = 0; c < spec.concepts; ++c) {
    Vec s = world.concept_latents.row_vec(c);
    for (std::size_t j = 0; j < spec.samples_per_concept; ++j) {
      SyntheticSample smp;
      smp.label = static_cast<std::uint32_t>(c);
      smp.shared = s;
      smp.specific.resize(M);
      smp.obs.resize(M);
      for (std::size_t m = 0; m < M; ++m) {
        const auto& mod = spec.modalities[m];
        Vec x(mod.obs_dim, 0.0);
        mat_vec_add(world.mix_shared[m], s, x);
        if (mod.has_specific) {
          smp.specific[m] = normal_vec(rng, spec.spec_dim);
          mat_vec_add(world.mix_spec[m], smp.specific[m], x);
        }
        for (double& v : x) v += spec.noise * rng.normal();
        smp.obs[m] = std::move(x);
      }
      ds.samples.push_back(std::move(smp));
    }
  }
  return ds;
}

Matrix render_concepts(const SyntheticWorld& world, std::size_t modality) {
  const auto& A = world.mix_shared.at(modality);
  Matrix out(world.spec.concepts, A.rows);
  for (std::size_t c = 0; c < world.spec.concepts; ++c)
    mat_vec_add(A, world.concept_latents.row_vec(c), out.row(c));
  return out;
}

Matrix Dataset::observations(std::size_t modality, std::span<const std::size_t> indices) const {
  const std::size_t w = world.spec.modalities.at(modality).obs_dim;
  Matrix out(indices.size(), w);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Vec& x = samples.at(indices[i]).obs[modality];
    std::copy(x.begin(), x.end(), out.row(i).begin());
  }
  return out;
}

Matrix Dataset::observations(std::size_t modality) const {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return observations(modality, all);
}

std::vector<std::uint32_t> Dataset::concepts() const {
  std::vector<std::uint32_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

Matrix Dataset::specific_latents(std::size_t modality) const {
  if (!world.spec.modalities.at(modality).has_specific)
    throw Error(ErrorKind::MissingSpecific, "modality has no specific latent");
  Matrix out(samples.size(), world.spec.spec_dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vec& u = samples[i].specific[modality];
    std::copy(u.begin(), u.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace msvq
