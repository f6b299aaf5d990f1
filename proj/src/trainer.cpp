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

#include "msvq/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace msvq {

namespace {

// Row-major (N x m*w) and (N*m x w) share one layout.
Matrix as_subvectors(const Matrix& m, std::size_t width) {
  Matrix out = m;
  out.rows = m.rows * m.cols / width;
  out.cols = width;
  return out;
}

Matrix from_subvectors(Matrix m, std::size_t rows) {
  m.cols = m.rows * m.cols / rows;
  m.rows = rows;
  return m;
}

void add_scaled(Matrix& dst, const Matrix& src, double s) {
  if (dst.rows == 0) dst = Matrix(src.rows, src.cols);
  for (std::size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += s * src.data[k];
}

// Slot-normalized sub-vectors of a projection stream, before any codebook exists.
std::vector<Vec> unit_subvectors(const DenseNet& encoder, const DenseNet& proj, const Matrix& x,
                                 std::size_t slots) {
  Matrix z = proj.forward(encoder.forward(x));
  std::vector<Vec> out;
  const std::size_t w = z.cols / slots;
  for (std::size_t i = 0; i < z.rows; ++i) {
    l2_normalize_inplace(z.row(i));
    for (std::size_t h = 0; h < slots; ++h) {
      auto part = z.row(i).subspan(h * w, w);
      out.push_back(l2_normalize(Vec(part.begin(), part.end())));
    }
  }
  return out;
}

std::vector<Vec> subsample(std::vector<Vec> v, std::size_t limit, Rng& rng) {
  if (v.size() <= limit) return v;
  rng.shuffle(v);
  v.resize(limit);
  return v;
}

struct Stream {
  std::size_t modality;
  bool specific;
};

std::vector<Stream> path_streams(const AlignmentPath& path, const PathTraces& traces) {
  std::vector<Stream> out;
  for (const auto& [m, t] : traces.traces) {
    out.push_back({m, false});
    if (t.specific) out.push_back({m, true});
  }
  (void)path;
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> align_pairs(const AlignmentPath& path) {
  // (target-side, bridge-side): target against every bridge, then bridge-internal pairs.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (auto b : path.bridges) pairs.emplace_back(path.target, b);
  for (std::size_t i = 0; i < path.bridges.size(); ++i)
    for (std::size_t j = i + 1; j < path.bridges.size(); ++j) pairs.emplace_back(path.bridges[j], path.bridges[i]);
  return pairs;
}

void add_counts(Vec& counts, std::vector<Vec>& features, const StreamTrace& s, std::size_t width) {
  for (std::size_t i = 0; i < s.codes.size(); ++i)
    for (std::size_t h = 0; h < s.codes[i].size(); ++h) {
      counts[s.codes[i][h]] += 1.0;
      auto part = s.slots.row(i).subspan(h * width, width);
      features.emplace_back(part.begin(), part.end());
    }
}

UsageStats batch_usage(const Vec& counts) {
  std::vector<std::size_t> codes;
  for (std::size_t k = 0; k < counts.size(); ++k)
    for (std::size_t c = 0; c < static_cast<std::size_t>(counts[k]); ++c) codes.push_back(k);
  return usage_stats(counts.size(), codes);
}

}  // namespace

// ----------------------------------------------------------------------------

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigError, what); };
  if (c.slots == 0 || c.shape.embed_dim == 0 || c.shape.embed_dim % c.slots != 0)
    fail("codebook.d must be a positive multiple of codebook.m");
  if (c.shared_entries == 0 || c.spec_entries == 0) fail("codebook sizes must be at least 1");
  if (c.is_enabled(LossName::Cctr) && (c.shared_entries < 10 || c.spec_entries < 10))
    fail("loss.cctr needs codebooks with at least 10 entries");
  if (!(c.decay > 0.0 && c.decay < 1.0)) fail("gamma must lie in (0, 1)");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) fail("lr must be positive");
  if (!(c.temperature > 0.0)) fail("eta must be positive");
  if (!(c.commit_beta >= 0.0)) fail("commit beta must be non-negative");
  if (!c.is_enabled(LossName::Align)) fail("loss.align cannot be disabled");
  if (c.eval_every == 0) fail("eval.every must be at least 1");
  if (c.shape.hidden == 0 || c.shape.decoder_hidden == 0) fail("hidden widths must be positive");
  for (double w : c.manual_weights)
    if (!(w >= 0.0) || !std::isfinite(w)) fail("manual loss weights must be finite and non-negative");
  try {
    SyntheticSpec s = c.data;
    s.seed = c.seed;
    validate(s);
  } catch (const Error& e) {
    fail(std::string("synth: ") + e.what());
  }
  std::size_t with_specific = 0, without = 0;
  for (const auto& m : c.data.modalities) (m.has_specific ? with_specific : without)++;
  if (with_specific < 2 || without < 1)
    fail("need a text modality and at least two modalities with specific parts");
}

AlignmentPath default_path_topology(const std::vector<ModalitySpec>& modalities) {
  AlignmentPath p;
  std::size_t target = modalities.size();
  for (std::size_t m = modalities.size(); m-- > 0;)
    if (modalities[m].has_specific) {
      target = m;
      break;
    }
  if (target == modalities.size()) throw Error(ErrorKind::InvalidSpec, "no target modality");
  p.target = target;
  for (std::size_t m = 0; m < modalities.size(); ++m)
    if (m != target) p.bridges.push_back(m);
  return p;
}

Model initialize(const TrainConfig& config, const Dataset& train) {
  validate(config);
  Rng rng(mix_seed(config.seed, 0x1417));
  Model model = Model::create(config.data.modalities, config.shape, config.slots, rng);
  AlignmentPath path = default_path_topology(model.modalities);

  Rng km(mix_seed(config.seed, 0xc0deb00c));
  std::size_t text = path.bridges.front();
  for (auto b : path.bridges)
    if (!model.modalities[b].has_specific) {
      text = b;
      break;
    }
  Matrix text_obs = train.observations(text);
  auto shared_samples =
      subsample(unit_subvectors(model.heads[text].encoder, model.heads[text].shared_proj, text_obs, config.slots),
                config.init_samples, km);
  path.codebooks.shared = CompositionalQuantizer(
      Codebook::init_kmeans(shared_samples, config.shared_entries, config.decay, km), config.slots);
  std::vector<std::size_t> members = path.bridges;
  members.push_back(path.target);
  std::sort(members.begin(), members.end());
  for (auto m : members) {
    const auto& head = model.heads[m];
    if (!head.has_specific()) continue;
    auto samples = subsample(unit_subvectors(head.encoder, *head.spec_proj, train.observations(m), config.slots),
                             config.init_samples, km);
    path.codebooks.specific.emplace(
        m, CompositionalQuantizer(Codebook::init_kmeans(samples, config.spec_entries, config.decay, km),
                                  config.slots));
  }
  model.paths.push_back(std::move(path));
  return model;
}

// ----------------------------------------------------------------------------

PathTraces forward_path(const Model& model, const AlignmentPath& path, const std::map<std::size_t, Matrix>& obs,
                        const std::map<std::size_t, FrozenCodes>* frozen) {
  PathTraces out;
  std::vector<std::size_t> members = path.bridges;
  members.push_back(path.target);
  for (auto m : members) {
    const FrozenCodes* fz = nullptr;
    if (frozen) fz = &frozen->at(m);
    auto t = forward(model.heads.at(m), path.codebooks, m, obs.at(m), fz);
    if (t.specific) reconstruct(*model.heads[m].decoder, t);
    out.traces.emplace(m, std::move(t));
  }
  return out;
}

ObjectiveResult path_objective(const Model& model, const AlignmentPath& path, const PathTraces& traces,
                               const LossArray& coef, double temperature, double beta) {
  ObjectiveResult r;
  for (const auto& [m, t] : traces.traces) r.grads.emplace(m, zero_grads(t));
  auto c = [&](LossName n) { return coef[loss_index(n)]; };
  auto& val = r.values;
  const std::size_t slots = model.slots;
  const Matrix& shared_entries = path.codebooks.shared.codebook().entries();

  // Alignment: summed over pairs.
  const auto pairs = align_pairs(path);
  for (auto [a, b] : pairs) {
    const auto& ta = traces.traces.at(a);
    const auto& tb = traces.traces.at(b);
    auto term = info_nce(ta.shared.quantized_unit, tb.shared.quantized_unit, temperature);
    val[loss_index(LossName::Align)] += term.value;
    if (c(LossName::Align) != 0.0) {
      add_scaled(r.grads[a].shared.quantized_unit, term.grads[0], c(LossName::Align));
      add_scaled(r.grads[b].shared.quantized_unit, term.grads[1], c(LossName::Align));
    }
  }

  // Cross-modal code matching on the unquantized shared sub-vectors, averaged over pairs.
  {
    const double s = 1.0 / static_cast<double>(pairs.size());
    for (auto [a, b] : pairs) {
      const auto& ta = traces.traces.at(a);
      const auto& tb = traces.traces.at(b);
      auto term = cmcm_loss(tb.shared.slots, ta.shared.slots, shared_entries, slots);
      val[loss_index(LossName::Cm)] += s * term.value;
      if (c(LossName::Cm) != 0.0) {
        add_scaled(r.grads[b].shared.slots, term.grads[0], s * c(LossName::Cm));
        add_scaled(r.grads[a].shared.slots, term.grads[1], s * c(LossName::Cm));
      }
    }
  }

  // Terms over modalities with a specific part.
  std::size_t n_spec = 0;
  for (const auto& [m, t] : traces.traces) n_spec += t.specific.has_value();
  if (n_spec) {
    const double s = 1.0 / static_cast<double>(n_spec);
    for (const auto& [m, t] : traces.traces) {
      if (!t.specific) continue;
      auto& g = r.grads[m];
      auto rec = recon_loss(t.input, t.reconstruction);
      val[loss_index(LossName::Recon)] += s * rec.value;
      if (c(LossName::Recon) != 0.0) add_scaled(g.reconstruction, rec.grads[1], s * c(LossName::Recon));

      auto orth = orth_loss(t.shared.quantized_unit, t.specific->quantized_unit);
      val[loss_index(LossName::Orth)] += s * orth.value;
      if (c(LossName::Orth) != 0.0) {
        add_scaled(g.shared.quantized_unit, orth.grads[0], s * c(LossName::Orth));
        add_scaled(g.specific->quantized_unit, orth.grads[1], s * c(LossName::Orth));
      }

      auto uni = uniform_loss(t.specific->quantized_unit);
      val[loss_index(LossName::Uni)] += s * uni.value;
      if (c(LossName::Uni) != 0.0) add_scaled(g.specific->quantized_unit, uni.grads[0], s * c(LossName::Uni));
    }
  }

  // Commitment and code contrast over every quantized stream.
  const auto streams = path_streams(path, traces);
  {
    const double s = 1.0 / static_cast<double>(streams.size());
    for (const auto& st : streams) {
      const auto& t = traces.traces.at(st.modality);
      const StreamTrace& tr = st.specific ? *t.specific : t.shared;
      auto& g = st.specific ? *r.grads[st.modality].specific : r.grads[st.modality].shared;
      const auto& q = st.specific ? path.codebooks.specific_for(st.modality) : path.codebooks.shared;

      auto vq = commit_loss(tr.slots, tr.quantized, beta);
      val[loss_index(LossName::Vq)] += s * vq.value;
      if (c(LossName::Vq) != 0.0) add_scaled(g.slots, vq.grads[0], s * c(LossName::Vq));

      const Matrix& entries = q.codebook().entries();
      if (entries.rows >= 10) {
        auto ctr = code_contrastive_loss(entries, as_subvectors(tr.slots, q.sub_dim()));
        val[loss_index(LossName::Cctr)] += s * ctr.value;
        if (c(LossName::Cctr) != 0.0)
          add_scaled(g.slots, from_subvectors(ctr.grads[0], tr.slots.rows), s * c(LossName::Cctr));
      }
    }
  }

  // Code uniformity over every codebook; its gradient goes to the entries.
  {
    std::vector<const CompositionalQuantizer*> books{&path.codebooks.shared};
    for (const auto& [m, q] : path.codebooks.specific) books.push_back(&q);
    const double s = 1.0 / static_cast<double>(books.size());
    for (const auto* q : books) {
      const Matrix& entries = q->codebook().entries();
      if (entries.rows < 2) {
        r.entry_grads.emplace_back(entries.rows, entries.cols);
        continue;
      }
      auto cu = code_uniform_loss(entries);
      val[loss_index(LossName::Cuni)] += s * cu.value;
      Matrix g(entries.rows, entries.cols);
      if (c(LossName::Cuni) != 0.0) add_scaled(g, cu.grads[0], s * c(LossName::Cuni));
      r.entry_grads.push_back(std::move(g));
    }
  }

  for (std::size_t k = 0; k < val.size(); ++k) r.total += coef[k] * val[k];
  return r;
}

BatchAssignments collect_assignments(const AlignmentPath& path, const PathTraces& traces) {
  BatchAssignments out;
  auto feed = [](Assignments& a, const StreamTrace& s, std::size_t width) {
    for (std::size_t i = 0; i < s.codes.size(); ++i)
      for (std::size_t h = 0; h < s.codes[i].size(); ++h) {
        auto part = s.slots.row(i).subspan(h * width, width);
        a[s.codes[i][h]].emplace_back(part.begin(), part.end());
      }
  };
  for (const auto& [m, t] : traces.traces) {
    feed(out.shared, t.shared, path.codebooks.shared.sub_dim());
    if (t.specific) feed(out.specific[m], *t.specific, path.codebooks.specific_for(m).sub_dim());
  }
  return out;
}

// ----------------------------------------------------------------------------

std::vector<std::string> codebook_names(const Model& model, const AlignmentPath& path) {
  std::vector<std::string> names{"shared"};
  for (const auto& [m, q] : path.codebooks.specific) names.push_back("spec_" + model.modalities[m].name);
  return names;
}

TrainResult train(const TrainConfig& config_in, const RowCallback& on_row) {
  TrainConfig config = config_in;
  config.data.seed = config.seed;
  validate(config);
  const SyntheticWorld world = make_world(config.data);
  const Dataset train_set = generate(world, Split::Train);
  const Dataset eval_set = generate(world, Split::Eval);

  TrainResult result;
  result.model = initialize(config, train_set);
  Model& model = result.model;
  result.codebook_names = codebook_names(model, model.paths.front());

  Rng batch_rng(mix_seed(config.seed, 0xba7c4));
  Rng reinit_rng(mix_seed(config.seed, 0x4e1417));
  AdaptiveBalancer balancer;
  const std::size_t per = config.data.samples_per_concept, C = config.data.concepts;

  LossArray weights{};
  for (LossName n : kAllLosses)
    weights[loss_index(n)] = config.mode == WeightMode::Manual ? config.manual_weights[loss_index(n)] : 1.0;
  weights[loss_index(LossName::Align)] = 1.0;

  std::vector<std::size_t> idx(C);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (std::size_t c = 0; c < C; ++c) idx[c] = c * per + batch_rng.index(per);

    for (auto& path : model.paths) {
      std::map<std::size_t, Matrix> obs;
      for (auto m : path.bridges) obs.emplace(m, train_set.observations(m, idx));
      obs.emplace(path.target, train_set.observations(path.target, idx));
      PathTraces traces = forward_path(model, path, obs);

      MetricsRow row;
      row.step = step;
      LossArray coef{};
      for (LossName n : kAllLosses) {
        const std::size_t k = loss_index(n);
        row.weights[k] = config.is_enabled(n) ? weights[k] : 0.0;
        coef[k] = config.zeroed_grads.contains(n) ? 0.0 : row.weights[k];
      }
      ObjectiveResult obj = path_objective(model, path, traces, coef, config.temperature, config.commit_beta);
      row.values = obj.values;

      for (const auto& [m, t] : traces.traces) {
        ModalityHead g = backward(model.heads[m], t, obj.grads.at(m));
        sgd_step(model.heads[m], g, config.lr);
      }

      // Codebooks: EMA from this batch's assignments, uniformity nudge, reinitialization.
      BatchAssignments assigned = collect_assignments(path, traces);
      path.codebooks.shared.codebook().ema_update(assigned.shared);
      for (auto& [m, q] : path.codebooks.specific) q.codebook().ema_update(assigned.specific[m]);

      std::vector<Codebook*> books{&path.codebooks.shared.codebook()};
      for (auto& [m, q] : path.codebooks.specific) books.push_back(&q.codebook());
      if (coef[loss_index(LossName::Cuni)] != 0.0)
        for (std::size_t b = 0; b < books.size(); ++b) books[b]->nudge(obj.entry_grads[b], config.lr);

      std::vector<Vec> counts;
      std::vector<std::vector<Vec>> features;
      counts.emplace_back(path.codebooks.shared.codebook().size(), 0.0);
      features.emplace_back();
      for (const auto& [m, t] : traces.traces)
        add_counts(counts[0], features[0], t.shared, path.codebooks.shared.sub_dim());
      for (auto& [m, q] : path.codebooks.specific) {
        counts.emplace_back(q.codebook().size(), 0.0);
        features.emplace_back();
        add_counts(counts.back(), features.back(), *traces.traces.at(m).specific, q.sub_dim());
      }
      for (const auto& cnt : counts) row.usage.push_back(batch_usage(cnt));
      if (config.reinit)
        for (std::size_t b = 0; b < books.size(); ++b) books[b]->reinit_dead(features[b], counts[b], reinit_rng);

      if (config.mode == WeightMode::Adaptive) {
        std::map<LossName, double> observed;
        for (LossName n : kAllLosses) observed[n] = row.values[loss_index(n)];
        balancer.step(observed);
        for (LossName n : balancer.options().balanced) weights[loss_index(n)] = balancer.weight(n);
      }

      if (&path == &model.paths.front()) {
        if (step == config.steps) model.round_to_f32();
        if (step % config.eval_every == 0 || step == config.steps) row.eval = eval_snapshot(model, eval_set);
        if (on_row) on_row(row);
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

// ----------------------------------------------------------------------------

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_header(const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "step";
  for (LossName n : kAllLosses) os << ',' << loss_name(n);
  for (LossName n : kAllLosses) os << ",w_" << loss_name(n);
  for (const auto& b : names) os << ",usage_" << b << ",ppl_" << b;
  os << ",r1_target_text,r10_target_text,r1_text_target,r10_text_target"
     << ",r1_target_bridge,r10_target_bridge,r1_bridge_target,r10_bridge_target,zero_shot";
  return os.str();
}

std::string snapshot_fields(const EvalSnapshot& s) {
  const auto& r = s.retrieval;
  std::ostringstream os;
  const RecallPair* ps[] = {&r.target_to_text, &r.text_to_target, &r.target_to_bridge, &r.bridge_to_target};
  for (const auto* p : ps) os << format_number(p->r1) << ',' << format_number(p->r10) << ',';
  os << format_number(s.zero_shot);
  return os.str();
}

std::string metrics_row(const MetricsRow& row) {
  std::ostringstream os;
  os << row.step;
  for (double v : row.values) os << ',' << format_number(v);
  for (double w : row.weights) os << ',' << format_number(w);
  for (const auto& u : row.usage) os << ',' << format_number(u.usage_rate) << ',' << format_number(u.perplexity);
  if (row.eval)
    os << ',' << snapshot_fields(*row.eval);
  else
    os << ",,,,,,,,,";
  return os.str();
}

std::string metrics_csv(const TrainResult& result) {
  std::string out = metrics_header(result.codebook_names) + "\n";
  for (const auto& row : result.rows) out += metrics_row(row) + "\n";
  return out;
}

}  // namespace msvq
