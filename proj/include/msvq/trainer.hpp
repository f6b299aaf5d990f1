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

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msvq/eval.hpp"
#include "msvq/losses.hpp"
#include "msvq/model.hpp"
#include "msvq/synthetic.hpp"

namespace msvq {

using LossArray = std::array<double, kAllLosses.size()>;

inline std::size_t loss_index(LossName n) { return static_cast<std::size_t>(n); }

enum class WeightMode { Adaptive, Manual };

struct TrainConfig {
  std::uint64_t seed = 7;  // drives the data, the initialization and batch sampling
  SyntheticSpec data;      // data.seed is replaced by seed
  ModelShape shape;
  std::size_t slots = 8;
  std::size_t shared_entries = 64;
  std::size_t spec_entries = 16;
  double decay = Codebook::kDefaultDecay;
  double lr = 5e-4;
  double temperature = 0.07;
  double commit_beta = 1.0;
  std::size_t steps = 2000;
  std::array<bool, kAllLosses.size()> enabled = {true, true, true, true, true, true, true, true};
  LossArray manual_weights = {1.0, 1.0, 0.1, 1.0, 50.0, 1.0, 0.01, 0.01};
  WeightMode mode = WeightMode::Adaptive;
  bool reinit = true;
  std::size_t eval_every = 200;
  // Upper bound on the sub-vectors clustered when initializing each codebook.
  std::size_t init_samples = 2048;
  // Test hook: these terms keep their logged weight but contribute no gradient.
  std::set<LossName> zeroed_grads;

  bool is_enabled(LossName n) const { return enabled[loss_index(n)]; }
};

void validate(const TrainConfig& config);

// Fixed topology: the last modality with a specific part is the target; every other
// modality bridges to it.
AlignmentPath default_path_topology(const std::vector<ModalitySpec>& modalities);

// Model with k-means initialized codebooks, before any training step.
Model initialize(const TrainConfig& config, const Dataset& train);

// ----------------------------------------------------------------------------
// Objective

struct PathTraces {
  std::map<std::size_t, ModalityTrace> traces;  // keyed by modality
};

PathTraces forward_path(const Model& model, const AlignmentPath& path, const std::map<std::size_t, Matrix>& obs,
                        const std::map<std::size_t, FrozenCodes>* frozen = nullptr);

struct ObjectiveResult {
  LossArray values{};
  double total = 0.0;  // sum of coefficient * value
  std::map<std::size_t, TraceGrads> grads;
  // Code-uniformity gradient per codebook (shared first, then specific by modality),
  // already scaled by its coefficient.
  std::vector<Matrix> entry_grads;
};

// Every term's value is computed; a term with coefficient 0 adds no gradient.
ObjectiveResult path_objective(const Model& model, const AlignmentPath& path, const PathTraces& traces,
                               const LossArray& coefficients, double temperature, double commit_beta);

// Sub-vectors each codebook was fed this batch, grouped by the code they received.
struct BatchAssignments {
  Assignments shared;
  std::map<std::size_t, Assignments> specific;
};
BatchAssignments collect_assignments(const AlignmentPath& path, const PathTraces& traces);

// ----------------------------------------------------------------------------
// Training loop

struct MetricsRow {
  std::size_t step = 0;
  LossArray values{};
  LossArray weights{};
  std::vector<UsageStats> usage;  // per codebook, over this batch
  std::optional<EvalSnapshot> eval;
};

struct TrainResult {
  Model model;
  std::vector<std::string> codebook_names;
  std::vector<MetricsRow> rows;
};

using RowCallback = std::function<void(const MetricsRow&)>;

TrainResult train(const TrainConfig& config, const RowCallback& on_row = {});

std::string metrics_header(const std::vector<std::string>& codebook_names);
std::string metrics_row(const MetricsRow& row);
std::string metrics_csv(const TrainResult& result);
// The evaluation columns of a metrics row, comma separated.
std::string snapshot_fields(const EvalSnapshot& snapshot);
std::string format_number(double v);

std::vector<std::string> codebook_names(const Model& model, const AlignmentPath& path);

}  // namespace msvq
