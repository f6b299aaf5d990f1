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
#include <optional>
#include <vector>

#include "msvq/codebook.hpp"
#include "msvq/model.hpp"
#include "msvq/synthetic.hpp"

namespace msvq {

// ----------------------------------------------------------------------------
// Metric primitives over plain embedding matrices

// Row i of queries is paired with row i of gallery. A query's rank counts every gallery
// item scoring strictly higher plus every other item tied with the match, so ties never
// help. Returns the fraction of queries ranked within each k.
std::vector<double> paired_recall(const Matrix& queries, const Matrix& gallery,
                                  std::span<const std::size_t> ks);

// Argmax-cosine classification against one prototype per class. A tie for the maximum
// counts as an error.
double zero_shot_accuracy(const Matrix& embeddings, std::span<const std::uint32_t> labels,
                          const Matrix& prototypes);

struct ProbeOptions {
  double heldout_fraction = 0.25;
  std::size_t iterations = 300;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

// Multinomial logistic regression fitted by full-batch gradient descent on a seeded
// train split (features standardized with train statistics); accuracy on the rest.
double linear_probe_accuracy(const Matrix& features, std::span<const std::uint32_t> labels, Rng& rng,
                             const ProbeOptions& options = {});

struct SimilarityStats {
  double intra_shared = 0.0;    // mean pairwise cosine among same-class shared embeddings
  double intra_specific = 0.0;  // same for specific embeddings
  double inter = 0.0;           // mean |cos(shared_i, specific_i)|
};

// Class-wise means, then averaged over classes.
SimilarityStats similarity_stats(const Matrix& shared, const Matrix& specific,
                                 std::span<const std::uint32_t> labels);

// Intra-modal retrieval: a query hits when a relevant gallery item (same concept and same
// attribute) lands within the top k under the pessimistic tie rule.
double fine_grained_recall(const Matrix& queries, std::span<const std::uint32_t> query_concepts,
                           std::span<const std::uint32_t> query_attrs, const Matrix& gallery,
                           std::span<const std::uint32_t> gallery_concepts,
                           std::span<const std::uint32_t> gallery_attrs, std::size_t k);

Matrix concat_columns(const Matrix& a, const Matrix& b);

// ----------------------------------------------------------------------------
// Model-level evaluation

struct ModalityEmbeddings {
  Matrix shared;             // quantized, unit rows
  std::optional<Matrix> specific;
  Matrix shared_raw;         // pre-quantization unit embedding
  std::optional<Matrix> specific_raw;
  std::vector<std::vector<std::uint32_t>> shared_codes;
  std::vector<std::vector<std::uint32_t>> specific_codes;
};

ModalityEmbeddings embed(const Model& model, const AlignmentPath& path, std::size_t modality,
                         const Matrix& observations);

struct RecallPair {
  double r1 = 0.0;
  double r10 = 0.0;
};

// Retrieval on episodes of one pair per concept (sample j of every concept), averaged
// over the episodes. Both directions.
struct RetrievalReport {
  RecallPair target_to_text, text_to_target;
  RecallPair target_to_bridge, bridge_to_target;
};

// The columns refreshed in the metrics log at every evaluation step.
struct EvalSnapshot {
  RetrievalReport retrieval;
  double zero_shot = 0.0;
};

struct EvalReport {
  EvalSnapshot snapshot;
  double probe_shared_concept = 0.0;
  double probe_specific_concept = 0.0;
  double probe_shared_attr = 0.0;
  double probe_specific_attr = 0.0;
  SimilarityStats similarity;
  double concat_shared = 0.0;
  double concat_specific = 0.0;
  double concat_both = 0.0;
  std::vector<std::pair<std::string, UsageStats>> usage;  // per codebook
};

// Episode protocol over an explicit set of embeddings; rows concept-major.
RetrievalReport retrieval_episodes(const Matrix& target, const Matrix& text, const Matrix& bridge,
                                   std::size_t concepts, std::size_t per_concept);

// Modalities of the first alignment path: its target, its bridge without a specific part
// (text) and its first bridge with one.
struct PathRoles {
  std::size_t target = 0;
  std::size_t text = 0;
  std::size_t bridge = 0;
};
PathRoles path_roles(const Model& model, const AlignmentPath& path);

EvalSnapshot eval_snapshot(const Model& model, const Dataset& data);
// Full report. The attribute labels come from k-means (4 clusters) on the target
// modality's true specific latents.
EvalReport evaluate(const Model& model, const Dataset& data, std::uint64_t seed);

// Prototypes: the model's quantized text embedding of every noise-free concept rendering.
Matrix text_prototypes(const Model& model, const AlignmentPath& path, const SyntheticWorld& world,
                       std::size_t text_modality);

std::vector<std::uint32_t> attribute_labels(const Dataset& data, std::size_t modality, std::size_t clusters,
                                            std::uint64_t seed);

}  // namespace msvq
