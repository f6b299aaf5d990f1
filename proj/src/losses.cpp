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
#include <cmath>
#include <numeric>

#include "msvq/kernels.hpp"

namespace msvq {

std::string_view loss_name(LossName name) {
  switch (name) {
    case LossName::Align: return "align";
    case LossName::Recon: return "recon";
    case LossName::Orth: return "orth";
    case LossName::Uni: return "uni";
    case LossName::Vq: return "vq";
    case LossName::Cm: return "cm";
    case LossName::Cctr: return "cctr";
    case LossName::Cuni: return "cuni";
  }
  return "?";
}

std::optional<LossName> parse_loss_name(std::string_view text) {
  for (LossName n : kAllLosses)
    if (loss_name(n) == text) return n;
  return std::nullopt;
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, ErrorKind kind, const char* what) {
  if (!a.same_shape(b)) throw Error(kind, what);
}

// In-place row softmax; returns log-sum-exp per row.
Vec softmax_rows(Matrix& m) {
  Vec lse(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto r = m.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double& x : r) {
      x = std::exp(x - mx);
      s += x;
    }
    for (double& x : r) x /= s;
    lse[i] = mx + std::log(s);
  }
  return lse;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

// out += scale * g * b   (g: n x k, b: k x d)
void add_product(Matrix& out, const Matrix& g, const Matrix& b, double scale) {
  for (std::size_t i = 0; i < g.rows; ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < g.cols; ++k) {
      const double w = scale * g(i, k);
      if (w == 0.0) continue;
      auto br = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += w * br[j];
    }
  }
}

LossTerm gaussian_potential(const Matrix& z, LossName name) {
  const std::size_t n = z.rows;
  const Matrix d = kernels::sq_dist_matrix(z, z);
  Matrix w(n, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      w(i, j) = std::exp(-d(i, j));
      total += w(i, j);
    }
  LossTerm out{name, std::log(total / static_cast<double>(n * (n - 1))), {Matrix(n, z.cols)}};
  Matrix& g = out.grads[0];
  for (std::size_t i = 0; i < n; ++i) {
    auto gi = g.row(i);
    auto zi = z.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double c = -4.0 * w(i, j) / total;
      auto zj = z.row(j);
      for (std::size_t t = 0; t < z.cols; ++t) gi[t] += c * (zi[t] - zj[t]);
    }
  }
  return out;
}

}  // namespace

LossTerm info_nce(const Matrix& target, const Matrix& bridge, double temperature) {
  require_same_shape(target, bridge, ErrorKind::BatchMismatch, "info_nce batches differ");
  if (!(temperature > 0.0)) throw Error(ErrorKind::NonPositiveTemperature, "info_nce temperature");
  const std::size_t n = target.rows;
  if (n == 0) throw Error(ErrorKind::EmptyInput, "info_nce on an empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);

  Matrix logits = kernels::gram(target, bridge);
  for (double& x : logits.data) x /= temperature;
  Matrix rows = logits;
  Matrix cols = transpose(logits);
  const Vec lse_r = softmax_rows(rows);
  const Vec lse_c = softmax_rows(cols);

  double value = 0.0;
  for (std::size_t i = 0; i < n; ++i) value += (lse_r[i] - logits(i, i)) + (lse_c[i] - logits(i, i));
  value *= inv_n;

  // dL/dlogits = (P_row - I)/N + (P_col - I)/N
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      g(i, j) = (rows(i, j) + cols(j, i) - (i == j ? 2.0 : 0.0)) * inv_n;

  LossTerm out{LossName::Align, value, {Matrix(n, target.cols), Matrix(n, bridge.cols)}};
  add_product(out.grads[0], g, bridge, 1.0 / temperature);
  add_product(out.grads[1], transpose(g), target, 1.0 / temperature);
  return out;
}

LossTerm recon_loss(std::span<const double> x, std::span<const double> x_hat) {
  if (x.size() != x_hat.size()) throw Error(ErrorKind::DimMismatch, "recon_loss widths differ");
  Matrix a(1, x.size()), b(1, x.size());
  std::copy(x.begin(), x.end(), a.data.begin());
  std::copy(x_hat.begin(), x_hat.end(), b.data.begin());
  return recon_loss(a, b);
}

LossTerm recon_loss(const Matrix& x, const Matrix& x_hat) {
  require_same_shape(x, x_hat, ErrorKind::DimMismatch, "recon_loss shapes differ");
  const double inv_n = x.rows ? 1.0 / static_cast<double>(x.rows) : 0.0;
  LossTerm out{LossName::Recon, 0.0, {Matrix(x.rows, x.cols), Matrix(x.rows, x.cols)}};
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double r = x_hat.data[i] - x.data[i];
    out.value += r * r;
    out.grads[0].data[i] = -2.0 * r * inv_n;
    out.grads[1].data[i] = 2.0 * r * inv_n;
  }
  out.value *= inv_n;
  return out;
}

LossTerm orth_loss(const Matrix& shared, const Matrix& specific) {
  require_same_shape(shared, specific, ErrorKind::BatchMismatch, "orth_loss batches differ");
  const std::size_t n = shared.rows;
  if (n == 0) throw Error(ErrorKind::EmptyInput, "orth_loss on an empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  LossTerm out{LossName::Orth, 0.0, {Matrix(n, shared.cols), Matrix(n, shared.cols)}};
  for (std::size_t i = 0; i < n; ++i) {
    const double ip = dot(shared.row(i), specific.row(i));
    out.value += ip * ip;
    auto gs = out.grads[0].row(i);
    auto gp = out.grads[1].row(i);
    for (std::size_t j = 0; j < shared.cols; ++j) {
      gs[j] = 2.0 * ip * specific(i, j) * inv_n;
      gp[j] = 2.0 * ip * shared(i, j) * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

LossTerm uniform_loss(const Matrix& z) {
  if (z.rows < 2) throw Error(ErrorKind::BatchTooSmall, "uniform_loss needs two samples");
  return gaussian_potential(z, LossName::Uni);
}

LossTerm commit_loss(const Matrix& z, const Matrix& z_hat, double beta) {
  require_same_shape(z, z_hat, ErrorKind::DimMismatch, "commit_loss shapes differ");
  if (!(beta > 0.0)) throw Error(ErrorKind::InvalidSpec, "commit_loss beta must be positive");
  const double inv_n = z.rows ? 1.0 / static_cast<double>(z.rows) : 0.0;
  LossTerm out{LossName::Vq, 0.0, {Matrix(z.rows, z.cols), Matrix(z.rows, z.cols)}};
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    const double r = z.data[i] - z_hat.data[i];
    out.value += r * r;
    out.grads[0].data[i] = 2.0 * beta * r * inv_n;
  }
  out.value *= beta * inv_n;
  return out;
}

LossTerm cmcm_loss(const Matrix& bridge_sub, const Matrix& target_sub, const Matrix& entries,
                   std::size_t slots) {
  require_same_shape(bridge_sub, target_sub, ErrorKind::BatchMismatch, "cmcm batches differ");
  const std::size_t n = bridge_sub.rows, k = entries.rows, sub = entries.cols;
  if (slots == 0 || bridge_sub.cols != slots * sub)
    throw Error(ErrorKind::DimMismatch, "cmcm sub-vector width");
  if (n == 0) throw Error(ErrorKind::EmptyInput, "cmcm on an empty batch");
  const double scale = 1.0 / static_cast<double>(n * slots);

  LossTerm out{LossName::Cm, 0.0, {Matrix(n, bridge_sub.cols), Matrix(n, target_sub.cols)}};

  // Per-slot log code distributions of one side.
  auto log_codes = [&](const Matrix& side, std::size_t h) {
    Matrix part(n, sub);
    for (std::size_t i = 0; i < n; ++i) {
      auto src = side.row(i).subspan(h * sub, sub);
      std::copy(src.begin(), src.end(), part.row(i).begin());
    }
    Matrix lp = kernels::sq_dist_matrix(part, entries);
    for (double& x : lp.data) x = -x;
    Matrix p = lp;
    const Vec lse = softmax_rows(p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) lp(i, c) -= lse[i];
    return std::pair{lp, p};
  };

  // Backprop from d/dlog P through log-softmax and the squared distance to the sub-vector.
  auto push_back_grad = [&](Matrix& grad, std::size_t i, std::size_t h, std::span<const double> g_log,
                            std::span<const double> p) {
    const double total = std::accumulate(g_log.begin(), g_log.end(), 0.0);
    auto dst = grad.row(i).subspan(h * sub, sub);
    for (std::size_t c = 0; c < k; ++c) {
      const double g_logit = g_log[c] - p[c] * total;
      // logit_c = -||z - e_c||^2 and sum_c g_logit = 0, so dz = 2 sum_c g_logit e_c.
      auto e = entries.row(c);
      for (std::size_t t = 0; t < sub; ++t) dst[t] += 2.0 * g_logit * e[t];
    }
  };

  for (std::size_t h = 0; h < slots; ++h) {
    const auto [la, pa] = log_codes(bridge_sub, h);
    const auto [lt, pt] = log_codes(target_sub, h);
    // S(i, j) = sum_c pa(i,c) lt(j,c) + pt(j,c) la(i,c)
    Matrix s = kernels::gram(pa, lt);
    const Matrix s2 = kernels::gram(la, pt);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] += s2.data[i];
    Matrix r = s;
    const Vec lse = softmax_rows(r);
    for (std::size_t i = 0; i < n; ++i) out.value += lse[i] - s(i, i);

    Matrix g = r;  // dL/dS
    for (std::size_t i = 0; i < n; ++i) {
      g(i, i) -= 1.0;
      for (std::size_t j = 0; j < n; ++j) g(i, j) *= scale;
    }
    for (std::size_t i = 0; i < n; ++i) {
      Vec g_la(k, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double w = g(i, j);
        for (std::size_t c = 0; c < k; ++c) g_la[c] += w * (pa(i, c) * lt(j, c) + pt(j, c));
      }
      push_back_grad(out.grads[0], i, h, g_la, pa.row(i));
    }
    for (std::size_t j = 0; j < n; ++j) {
      Vec g_lt(k, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double w = g(i, j);
        for (std::size_t c = 0; c < k; ++c) g_lt[c] += w * (pt(j, c) * la(i, c) + pa(i, c));
      }
      push_back_grad(out.grads[1], j, h, g_lt, pt.row(j));
    }
  }
  out.value *= scale;
  return out;
}

std::size_t contrastive_pos_count(std::size_t num_entries) {
  return std::max<std::size_t>(1, num_entries / 10);
}

std::size_t contrastive_neg_count(std::size_t num_entries) {
  return std::max<std::size_t>(1, num_entries / 2);
}

LossTerm code_contrastive_loss(const Matrix& entries, std::span<const double> subvec) {
  Matrix one(1, subvec.size());
  std::copy(subvec.begin(), subvec.end(), one.data.begin());
  return code_contrastive_loss(entries, one);
}

LossTerm code_contrastive_loss(const Matrix& entries, const Matrix& subvecs) {
  const std::size_t k = entries.rows;
  if (k < 10) throw Error(ErrorKind::CodebookTooSmall, "code_contrastive_loss needs K >= 10");
  if (subvecs.cols != entries.cols) throw Error(ErrorKind::DimMismatch, "sub-vector width");
  const std::size_t n_pos = contrastive_pos_count(k), n_neg = contrastive_neg_count(k);
  const double inv_n = subvecs.rows ? 1.0 / static_cast<double>(subvecs.rows) : 0.0;
  const Matrix d = kernels::sq_dist_matrix(subvecs, entries);

  LossTerm out{LossName::Cctr, 0.0, {Matrix(subvecs.rows, subvecs.cols)}};
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < subvecs.rows; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d(i, a) < d(i, b); });
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < n_pos; ++t) num += d(i, order[t]);
    num /= static_cast<double>(n_pos);
    for (std::size_t t = k - n_neg; t < k; ++t) den += d(i, order[t]);
    if (den <= 1e-300) continue;
    out.value += num / den;

    auto z = subvecs.row(i);
    auto g = out.grads[0].row(i);
    const double a = inv_n / den;                          // weight of d(num)
    const double b = inv_n * num / (den * den);            // weight of d(den)
    for (std::size_t t = 0; t < n_pos; ++t) {
      auto e = entries.row(order[t]);
      for (std::size_t j = 0; j < z.size(); ++j) g[j] += a * 2.0 * (z[j] - e[j]) / static_cast<double>(n_pos);
    }
    for (std::size_t t = k - n_neg; t < k; ++t) {
      auto e = entries.row(order[t]);
      for (std::size_t j = 0; j < z.size(); ++j) g[j] -= b * 2.0 * (z[j] - e[j]);
    }
  }
  out.value *= inv_n;
  return out;
}

LossTerm code_uniform_loss(const Matrix& entries) {
  if (entries.rows < 2) throw Error(ErrorKind::CodebookTooSmall, "code_uniform_loss needs K >= 2");
  return gaussian_potential(entries, LossName::Cuni);
}

// ----------------------------------------------------------------------------

GradcheckReport gradcheck(const LossFn& fn, const std::vector<Matrix>& inputs, double h,
                          const std::vector<bool>& check) {
  const LossTerm base = fn(inputs);
  if (base.grads.size() != inputs.size())
    throw Error(ErrorKind::ShapeMismatch, "loss returned a gradient count different from its inputs");
  GradcheckReport report;
  report.per_input.assign(inputs.size(), 0.0);
  std::vector<Matrix> probe = inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (!check.empty() && !check[t]) continue;
    if (!base.grads[t].same_shape(inputs[t])) throw Error(ErrorKind::ShapeMismatch, "gradient shape");
    for (std::size_t c = 0; c < inputs[t].data.size(); ++c) {
      const double orig = probe[t].data[c];
      probe[t].data[c] = orig + h;
      const double up = fn(probe).value;
      probe[t].data[c] = orig - h;
      const double down = fn(probe).value;
      probe[t].data[c] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = base.grads[t].data[c];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      report.per_input[t] = std::max(report.per_input[t], std::abs(analytic - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, report.per_input[t]);
  }
  return report;
}

// ----------------------------------------------------------------------------

AdaptiveBalancer::AdaptiveBalancer(Options options, std::map<LossName, double> initial_weights)
    : options_(std::move(options)), interval_(std::max<std::size_t>(1, options_.initial_interval)) {
  for (LossName n : kAllLosses) weights_[n] = 1.0;
  for (const auto& [n, w] : initial_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorKind::ConfigError, "balancer weights must be positive");
    weights_[n] = w;
  }
  weights_[LossName::Align] = 1.0;
}

bool AdaptiveBalancer::step(const std::map<LossName, double>& observed) {
  if (!observed.contains(LossName::Align))
    throw Error(ErrorKind::MissingAlignTerm, "balancer step without the alignment loss");
  for (const auto& [n, v] : observed) {
    const double mag = std::abs(v);
    auto it = ema_.find(n);
    if (it == ema_.end())
      ema_[n] = mag;
    else
      it->second = options_.ema_decay * it->second + (1.0 - options_.ema_decay) * mag;
  }
  ++steps_;
  if (++since_update_ < interval_) return false;
  const double align = ema_.at(LossName::Align);
  for (LossName n : options_.balanced) {
    if (n == LossName::Align) continue;
    auto it = ema_.find(n);
    if (it == ema_.end()) continue;
    const double w = std::max(align, options_.epsilon) / std::max(it->second, options_.epsilon);
    weights_[n] = w;
  }
  interval_ += options_.interval_step;
  since_update_ = 0;
  return true;
}

double AdaptiveBalancer::weight(LossName name) const { return weights_.at(name); }

std::optional<double> AdaptiveBalancer::ema(LossName name) const {
  auto it = ema_.find(name);
  if (it == ema_.end()) return std::nullopt;
  return it->second;
}

}  // namespace msvq
