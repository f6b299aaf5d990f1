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
#include <span>
#include <string_view>
#include <vector>

#include "msvq/codebook.hpp"
#include "msvq/numerics.hpp"

namespace msvq {

// Column order of the metrics CSV.
enum class LossName { Align, Recon, Orth, Uni, Vq, Cm, Cctr, Cuni };

inline constexpr std::array<LossName, 8> kAllLosses = {
    LossName::Align, LossName::Recon, LossName::Orth, LossName::Uni,
    LossName::Vq,    LossName::Cm,    LossName::Cctr, LossName::Cuni};

std::string_view loss_name(LossName name);
std::optional<LossName> parse_loss_name(std::string_view text);

// A loss value with one gradient per input, in input order and input shape.
struct LossTerm {
  LossName name = LossName::Align;
  double value = 0.0;
  std::vector<Matrix> grads;
};

// Symmetric InfoNCE over unit-norm rows: mean over i of -log softmax_j(t_i . a_j / eta)[i]
// plus the same with the roles of the two batches swapped.
LossTerm info_nce(const Matrix& target, const Matrix& bridge, double temperature);

// ||x - x_hat||^2 for one sample; the batch form averages over rows.
LossTerm recon_loss(std::span<const double> x, std::span<const double> x_hat);
LossTerm recon_loss(const Matrix& x, const Matrix& x_hat);

// (1/N) sum_i <shared_i, specific_i>^2.
LossTerm orth_loss(const Matrix& shared, const Matrix& specific);

// log of the mean over ordered pairs i != j of exp(-||z_i - z_j||^2).
LossTerm uniform_loss(const Matrix& z);

// beta * mean_i ||z_i - sg(z_hat_i)||^2. The gradient for z_hat is identically zero.
LossTerm commit_loss(const Matrix& z, const Matrix& z_hat, double beta);

// Cross-modal code matching. Rows hold m contiguous sub-vectors of width entries.cols;
// a sub-vector's code distribution is the softmin over squared distances to the entries.
// Averaged over samples and slots.
LossTerm cmcm_loss(const Matrix& bridge_sub, const Matrix& target_sub, const Matrix& entries,
                   std::size_t slots);

// Mean squared distance to the closest 10% of entries over the summed squared distance
// to the furthest 50%. The batch form averages over rows (each row one sub-vector).
LossTerm code_contrastive_loss(const Matrix& entries, std::span<const double> subvec);
LossTerm code_contrastive_loss(const Matrix& entries, const Matrix& subvecs);

// uniform_loss over the codevectors themselves.
LossTerm code_uniform_loss(const Matrix& entries);
inline LossTerm code_uniform_loss(const Codebook& cb) { return code_uniform_loss(cb.entries()); }

// Sizes of the closest / furthest selections used by code_contrastive_loss.
std::size_t contrastive_pos_count(std::size_t num_entries);
std::size_t contrastive_neg_count(std::size_t num_entries);

// ----------------------------------------------------------------------------
// Finite-difference verification

using LossFn = std::function<LossTerm(const std::vector<Matrix>&)>;

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::vector<double> per_input;
};

// Central differences on every coordinate of every input flagged in `check`
// (all inputs when empty). Error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradcheckReport gradcheck(const LossFn& fn, const std::vector<Matrix>& inputs, double h = 1e-5,
                          const std::vector<bool>& check = {});

struct SuiteResult {
  LossName name = LossName::Align;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool stop_grad_ok = true;  // commitment only: the quantized side gets exactly zero
  bool passed() const { return max_rel_error < tolerance && stop_grad_ok; }
};

// Checks all eight terms at `points` seeded random inputs each. Quadratic terms (recon,
// orth, vq) must agree to 1e-6 and are probed with h = 1e-2, where central differences are
// still exact; terms with a softmax, log-sum-exp or ratio to 1e-4 with h = 1e-5. Code
// contrastive points are redrawn until its nearest and farthest sets are stable under h.
// `corrupt` perturbs one term's analytic gradient to exercise the failure path.
std::vector<SuiteResult> gradcheck_suite(std::uint64_t seed, std::size_t points = 10,
                                         std::optional<LossName> corrupt = std::nullopt);

// ----------------------------------------------------------------------------
// Adaptive loss balancing

// Tracks an EMA of every observed loss magnitude and, at linearly growing intervals,
// rescales the balanced terms so that their magnitude matches the alignment loss.
class AdaptiveBalancer {
 public:
  struct Options {
    double ema_decay = 0.99;
    std::size_t initial_interval = 1;
    std::size_t interval_step = 1;
    double epsilon = 1e-8;
    std::set<LossName> balanced = {LossName::Vq,  LossName::Cctr, LossName::Cuni,
                                   LossName::Cm,  LossName::Orth, LossName::Uni};
  };

  AdaptiveBalancer() : AdaptiveBalancer(Options{}) {}
  explicit AdaptiveBalancer(Options options, std::map<LossName, double> initial_weights = {});

  // Returns true when the weights were refreshed on this step.
  bool step(const std::map<LossName, double>& observed);

  double weight(LossName name) const;
  std::optional<double> ema(LossName name) const;
  std::size_t interval() const { return interval_; }
  std::size_t steps_since_update() const { return since_update_; }
  std::size_t steps() const { return steps_; }
  const Options& options() const { return options_; }

  void set_ema(LossName name, double value) { ema_[name] = value; }

 private:
  Options options_;
  std::map<LossName, double> ema_;
  std::map<LossName, double> weights_;
  std::size_t interval_;
  std::size_t since_update_ = 0;
  std::size_t steps_ = 0;
};

}  // namespace msvq
