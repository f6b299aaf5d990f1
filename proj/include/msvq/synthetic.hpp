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
#include <vector>

#include "msvq/model.hpp"
#include "msvq/numerics.hpp"

namespace msvq {

// Every modality renders x = A s + B u + noise, with s fixed per concept and u fresh per
// sample. Modalities without a specific part have B = 0.
struct SyntheticSpec {
  std::size_t concepts = 16;
  std::size_t shared_dim = 8;  // p
  std::size_t spec_dim = 4;    // q
  double noise = 0.05;
  std::size_t samples_per_concept = 64;
  std::uint64_t seed = 7;
  std::vector<ModalitySpec> modalities = {{"text", 32, false}, {"modality-a", 32, true}, {"modality-b", 32, true}};
};

// The fixed part of a synthetic setting: mixing matrices and concept latents.
struct SyntheticWorld {
  SyntheticSpec spec;
  std::vector<Matrix> mix_shared;  // A per modality, obs x p
  std::vector<Matrix> mix_spec;    // B per modality, obs x q
  Matrix concept_latents;          // C x p
};

struct SyntheticSample {
  std::uint32_t label = 0;  // concept id
  Vec shared;                 // s
  std::vector<Vec> specific;  // u per modality; empty for modalities without one
  std::vector<Vec> obs;       // x per modality
};

enum class Split : std::uint64_t { Train = 1, Eval = 2 };

struct Dataset {
  SyntheticWorld world;
  std::vector<SyntheticSample> samples;  // concept-major: index = concept * per_concept + j

  std::size_t size() const { return samples.size(); }
  Matrix observations(std::size_t modality, std::span<const std::size_t> indices) const;
  Matrix observations(std::size_t modality) const;
  std::vector<std::uint32_t> concepts() const;
  Matrix specific_latents(std::size_t modality) const;
};

void validate(const SyntheticSpec& spec);
SyntheticWorld make_world(const SyntheticSpec& spec);
// Samples of one split; both splits share the world.
Dataset generate(const SyntheticSpec& spec, Split split = Split::Train);
Dataset generate(const SyntheticWorld& world, Split split);

// Noise-free rendering A s of every concept in one modality.
Matrix render_concepts(const SyntheticWorld& world, std::size_t modality);

}  // namespace msvq
