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

#include "msvq/losses.hpp"

#include <algorithm>

namespace msvq {

namespace {

Matrix gaussian(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

Matrix unit_rows(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m = gaussian(rng, r, c);
  for (std::size_t i = 0; i < r; ++i) l2_normalize_inplace(m.row(i));
  return m;
}

// Unit-normalizes every width-w slot of every row.
Matrix unit_slots(Rng& rng, std::size_t r, std::size_t c, std::size_t w) {
  Matrix m = gaussian(rng, r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t s = 0; s < c / w; ++s) l2_normalize_inplace(m.row(i).subspan(s * w, w));
  return m;
}

// Quadratic in every single coordinate, so central differences are exact for any step
// and a wide step only suppresses round-off.
bool quadratic(LossName n) { return n == LossName::Recon || n == LossName::Orth || n == LossName::Vq; }

// The nearest / farthest sets of the code contrastive loss must not change within the
// probe step: every boundary gap in squared distance exceeds `margin`.
bool stable_code_sets(const Matrix& entries, const Matrix& subvecs, double margin) {
  const std::size_t k = entries.rows, n_pos = contrastive_pos_count(k), n_neg = contrastive_neg_count(k);
  for (std::size_t i = 0; i < subvecs.rows; ++i) {
    Vec d(k);
    for (std::size_t c = 0; c < k; ++c) {
      d[c] = 0.0;
      for (std::size_t j = 0; j < entries.cols; ++j) d[c] += (subvecs(i, j) - entries(c, j)) * (subvecs(i, j) - entries(c, j));
    }
    std::sort(d.begin(), d.end());
    if (d[n_pos] - d[n_pos - 1] < margin || d[k - n_neg] - d[k - n_neg - 1] < margin) return false;
  }
  return true;
}

}  // namespace

std::vector<SuiteResult> gradcheck_suite(std::uint64_t seed, std::size_t points, std::optional<LossName> corrupt) {
  std::vector<SuiteResult> out;
  for (LossName name : kAllLosses) {
    SuiteResult res;
    res.name = name;
    res.tolerance = quadratic(name) ? 1e-6 : 1e-4;
    const double h = quadratic(name) ? 1e-2 : 1e-5;
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(name) + 1));
    for (std::size_t p = 0; p < points; ++p) {
      LossFn fn;
      std::vector<Matrix> inputs;
      std::vector<bool> check;
      switch (name) {
        case LossName::Align:
          fn = [](const std::vector<Matrix>& in) { return info_nce(in[0], in[1], 0.07); };
          inputs = {unit_rows(rng, 4, 8), unit_rows(rng, 4, 8)};
          break;
        case LossName::Recon:
          fn = [](const std::vector<Matrix>& in) { return recon_loss(in[0], in[1]); };
          inputs = {gaussian(rng, 3, 7), gaussian(rng, 3, 7)};
          break;
        case LossName::Orth:
          fn = [](const std::vector<Matrix>& in) { return orth_loss(in[0], in[1]); };
          inputs = {gaussian(rng, 4, 6), gaussian(rng, 4, 6)};
          break;
        case LossName::Uni:
          fn = [](const std::vector<Matrix>& in) { return uniform_loss(in[0]); };
          inputs = {unit_rows(rng, 5, 8)};
          break;
        case LossName::Vq:
          fn = [](const std::vector<Matrix>& in) { return commit_loss(in[0], in[1], 0.25); };
          inputs = {gaussian(rng, 3, 5), gaussian(rng, 3, 5)};
          check = {true, false};
          break;
        case LossName::Cm: {
          Matrix entries = unit_rows(rng, 4, 3);
          fn = [entries](const std::vector<Matrix>& in) { return cmcm_loss(in[0], in[1], entries, 2); };
          inputs = {unit_slots(rng, 3, 6, 3), unit_slots(rng, 3, 6, 3)};
          break;
        }
        case LossName::Cctr: {
          Matrix entries = unit_rows(rng, 20, 4);
          do inputs = {unit_rows(rng, 3, 4)};
          while (!stable_code_sets(entries, inputs[0], 1e-3));
          fn = [entries](const std::vector<Matrix>& in) { return code_contrastive_loss(entries, in[0]); };
          break;
        }
        case LossName::Cuni:
          fn = [](const std::vector<Matrix>& in) { return code_uniform_loss(in[0]); };
          inputs = {unit_rows(rng, 6, 3)};
          break;
      }
      if (corrupt && *corrupt == name) {
        fn = [inner = fn](const std::vector<Matrix>& in) {
          LossTerm t = inner(in);
          t.grads[0].data[0] += 0.5;
          return t;
        };
      }
      res.max_rel_error = std::max(res.max_rel_error, gradcheck(fn, inputs, h, check).max_rel_error);
      if (name == LossName::Vq) {
        LossTerm t = fn(inputs);
        for (double g : t.grads[1].data) res.stop_grad_ok = res.stop_grad_ok && g == 0.0;
      }
    }
    out.push_back(res);
  }
  return out;
}

}  // namespace msvq
