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

#include "msvq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "msvq/kernels.hpp"

namespace msvq {

namespace {

Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows; ++i) l2_normalize_inplace(out.row(i));
  return out;
}

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw Error(ErrorKind::DimMismatch, "embedding widths differ");
  return kernels::gram(unit_rows(a), unit_rows(b));
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(m.row(idx[i]).begin(), m.row(idx[i]).end(), out.row(i).begin());
  return out;
}

RecallPair recall_pair(const Matrix& q, const Matrix& g) {
  const std::size_t ks[] = {1, 10};
  auto r = paired_recall(q, g, ks);
  return {r[0], r[1]};
}

void accumulate(RecallPair& acc, const RecallPair& r) {
  acc.r1 += r.r1;
  acc.r10 += r.r10;
}

void scale(RecallPair& r, double s) {
  r.r1 *= s;
  r.r10 *= s;
}

std::vector<std::size_t> flat_codes(const std::vector<std::vector<std::uint32_t>>& codes) {
  std::vector<std::size_t> out;
  for (const auto& row : codes) out.insert(out.end(), row.begin(), row.end());
  return out;
}

}  // namespace

// ----------------------------------------------------------------------------

std::vector<double> paired_recall(const Matrix& queries, const Matrix& gallery,
                                  std::span<const std::size_t> ks) {
  if (queries.rows != gallery.rows) throw Error(ErrorKind::BatchMismatch, "paired sets differ in size");
  if (queries.rows == 0) throw Error(ErrorKind::EmptyInput, "no queries");
  Matrix s = cosine_matrix(queries, gallery);
  std::vector<double> hits(ks.size(), 0.0);
  for (std::size_t i = 0; i < s.rows; ++i) {
    const double match = s(i, i);
    std::size_t rank = 0;
    for (std::size_t j = 0; j < s.cols; ++j)
      if (j != i && s(i, j) >= match) ++rank;
    for (std::size_t k = 0; k < ks.size(); ++k)
      if (rank < ks[k]) hits[k] += 1.0;
  }
  for (double& h : hits) h /= static_cast<double>(s.rows);
  return hits;
}

double zero_shot_accuracy(const Matrix& embeddings, std::span<const std::uint32_t> labels,
                          const Matrix& prototypes) {
  if (embeddings.rows != labels.size()) throw Error(ErrorKind::BatchMismatch, "label count mismatch");
  if (embeddings.rows == 0) throw Error(ErrorKind::EmptyInput, "no embeddings");
  for (auto l : labels)
    if (l >= prototypes.rows) throw Error(ErrorKind::MissingPrototype, "no prototype for class " + std::to_string(l));
  Matrix s = cosine_matrix(embeddings, prototypes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < s.rows; ++i) {
    const double mine = s(i, labels[i]);
    bool best = true;
    for (std::size_t c = 0; c < s.cols && best; ++c)
      if (c != labels[i] && s(i, c) >= mine) best = false;
    correct += best;
  }
  return static_cast<double>(correct) / static_cast<double>(s.rows);
}

double linear_probe_accuracy(const Matrix& features, std::span<const std::uint32_t> labels, Rng& rng,
                             const ProbeOptions& opt) {
  const std::size_t n = features.rows, d = features.cols;
  if (n != labels.size()) throw Error(ErrorKind::BatchMismatch, "label count mismatch");
  std::set<std::uint32_t> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw Error(ErrorKind::DegenerateLabels, "probe needs at least two classes");
  const std::size_t C = *classes.rbegin() + 1;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t n_test = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(opt.heldout_fraction * static_cast<double>(n))), 1, n - 1);
  std::span<const std::size_t> test(order.data(), n_test);
  std::span<const std::size_t> train(order.data() + n_test, n - n_test);

  Vec mean(d, 0.0), sd(d, 0.0);
  for (auto i : train)
    for (std::size_t j = 0; j < d; ++j) mean[j] += features(i, j);
  for (double& v : mean) v /= static_cast<double>(train.size());
  for (auto i : train)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (features(i, j) - mean[j]) * (features(i, j) - mean[j]);
  for (double& v : sd) v = std::sqrt(v / static_cast<double>(train.size())) + 1e-8;
  auto standardized = [&](std::span<const std::size_t> idx) {
    Matrix x(idx.size(), d);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) x(r, j) = (features(idx[r], j) - mean[j]) / sd[j];
    return x;
  };
  Matrix xt = standardized(train);

  Matrix W(C, d);
  Vec b(C, 0.0);
  Matrix logits(train.size(), C);
  const double inv_n = 1.0 / static_cast<double>(train.size());
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    Matrix gW(C, d);
    Vec gb(C, 0.0);
    for (std::size_t r = 0; r < train.size(); ++r) {
      auto x = xt.row(r);
      auto z = logits.row(r);
      double mx = -1e300;
      for (std::size_t c = 0; c < C; ++c) {
        z[c] = b[c] + dot(W.row(c), x);
        mx = std::max(mx, z[c]);
      }
      double sum = 0.0;
      for (double& v : z) sum += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < C; ++c) {
        double g = (z[c] / sum - (labels[train[r]] == c ? 1.0 : 0.0)) * inv_n;
        gb[c] += g;
        auto gw = gW.row(c);
        for (std::size_t j = 0; j < d; ++j) gw[j] += g * x[j];
      }
    }
    for (std::size_t k = 0; k < W.data.size(); ++k)
      W.data[k] -= opt.learning_rate * (gW.data[k] + opt.l2 * W.data[k]);
    for (std::size_t c = 0; c < C; ++c) b[c] -= opt.learning_rate * gb[c];
  }

  Matrix xs = standardized(test);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t c = 0; c < C; ++c) {
      double v = b[c] + dot(W.row(c), xs.row(r));
      if (v > best_v) best_v = v, best = c;
    }
    correct += best == labels[test[r]];
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

SimilarityStats similarity_stats(const Matrix& shared, const Matrix& specific,
                                 std::span<const std::uint32_t> labels) {
  if (!shared.same_shape(specific) || shared.rows != labels.size())
    throw Error(ErrorKind::BatchMismatch, "similarity inputs disagree in shape");
  Matrix a = unit_rows(shared), b = unit_rows(specific);
  std::map<std::uint32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  SimilarityStats out;
  std::size_t intra_classes = 0;
  for (const auto& [_, idx] : by_class) {
    double inter = 0.0;
    for (auto i : idx) inter += std::abs(dot(a.row(i), b.row(i)));
    out.inter += inter / static_cast<double>(idx.size());
    if (idx.size() < 2) continue;
    double ss = 0.0, sp = 0.0;
    std::size_t pairs = 0;
    for (std::size_t x = 0; x < idx.size(); ++x)
      for (std::size_t y = x + 1; y < idx.size(); ++y, ++pairs) {
        ss += dot(a.row(idx[x]), a.row(idx[y]));
        sp += dot(b.row(idx[x]), b.row(idx[y]));
      }
    out.intra_shared += ss / static_cast<double>(pairs);
    out.intra_specific += sp / static_cast<double>(pairs);
    ++intra_classes;
  }
  out.inter /= static_cast<double>(by_class.size());
  if (intra_classes) {
    out.intra_shared /= static_cast<double>(intra_classes);
    out.intra_specific /= static_cast<double>(intra_classes);
  }
  return out;
}

double fine_grained_recall(const Matrix& queries, std::span<const std::uint32_t> qc,
                           std::span<const std::uint32_t> qa, const Matrix& gallery,
                           std::span<const std::uint32_t> gc, std::span<const std::uint32_t> ga,
                           std::size_t k) {
  if (queries.rows != qc.size() || queries.rows != qa.size() || gallery.rows != gc.size() ||
      gallery.rows != ga.size())
    throw Error(ErrorKind::BatchMismatch, "label count mismatch");
  if (queries.rows == 0) throw Error(ErrorKind::EmptyInput, "no queries");
  Matrix s = cosine_matrix(queries, gallery);
  std::size_t hits = 0;
  std::vector<double> sorted(gallery.rows);
  for (std::size_t i = 0; i < s.rows; ++i) {
    auto row = s.row(i);
    sorted.assign(row.begin(), row.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t g = 0; g < gallery.rows; ++g) {
      if (gc[g] != qc[i] || ga[g] != qa[i]) continue;
      // Items scoring at least as high, other than g itself.
      auto ge = static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), row[g]));
      if (ge - 1 < k) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(queries.rows);
}

Matrix concat_columns(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw Error(ErrorKind::BatchMismatch, "row counts differ");
  Matrix out(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::copy(a.row(i).begin(), a.row(i).end(), out.row(i).begin());
    std::copy(b.row(i).begin(), b.row(i).end(), out.row(i).begin() + a.cols);
  }
  return out;
}

// ----------------------------------------------------------------------------

ModalityEmbeddings embed(const Model& model, const AlignmentPath& path, std::size_t modality,
                         const Matrix& observations) {
  constexpr std::size_t kChunk = 256;
  const auto& head = model.heads.at(modality);
  const std::size_t n = observations.rows, d = head.shared_proj.out_dim();
  ModalityEmbeddings e;
  e.shared = Matrix(n, d);
  e.shared_raw = Matrix(n, d);
  if (head.has_specific()) {
    e.specific = Matrix(n, d);
    e.specific_raw = Matrix(n, d);
  }
  for (std::size_t start = 0; start < n; start += kChunk) {
    std::size_t len = std::min(kChunk, n - start);
    Matrix chunk(len, observations.cols);
    std::copy(observations.data.begin() + start * observations.cols,
              observations.data.begin() + (start + len) * observations.cols, chunk.data.begin());
    auto t = forward(head, path.codebooks, modality, chunk);
    std::copy(t.shared.quantized_unit.data.begin(), t.shared.quantized_unit.data.end(),
              e.shared.data.begin() + start * d);
    std::copy(t.shared.unit.data.begin(), t.shared.unit.data.end(), e.shared_raw.data.begin() + start * d);
    e.shared_codes.insert(e.shared_codes.end(), t.shared.codes.begin(), t.shared.codes.end());
    if (t.specific) {
      std::copy(t.specific->quantized_unit.data.begin(), t.specific->quantized_unit.data.end(),
                e.specific->data.begin() + start * d);
      std::copy(t.specific->unit.data.begin(), t.specific->unit.data.end(),
                e.specific_raw->data.begin() + start * d);
      e.specific_codes.insert(e.specific_codes.end(), t.specific->codes.begin(), t.specific->codes.end());
    }
  }
  return e;
}

PathRoles path_roles(const Model& model, const AlignmentPath& path) {
  PathRoles r;
  r.target = path.target;
  bool text = false, bridge = false;
  for (auto b : path.bridges) {
    if (!model.modalities.at(b).has_specific && !text) r.text = b, text = true;
    else if (model.modalities.at(b).has_specific && !bridge) r.bridge = b, bridge = true;
  }
  if (!text || !bridge)
    throw Error(ErrorKind::InvalidSpec, "evaluation needs a text bridge and a second bridge");
  return r;
}

RetrievalReport retrieval_episodes(const Matrix& target, const Matrix& text, const Matrix& bridge,
                                   std::size_t concepts, std::size_t per_concept) {
  RetrievalReport r;
  std::vector<std::size_t> idx(concepts);
  for (std::size_t j = 0; j < per_concept; ++j) {
    for (std::size_t c = 0; c < concepts; ++c) idx[c] = c * per_concept + j;
    Matrix t = select_rows(target, idx), x = select_rows(text, idx), b = select_rows(bridge, idx);
    accumulate(r.target_to_text, recall_pair(t, x));
    accumulate(r.text_to_target, recall_pair(x, t));
    accumulate(r.target_to_bridge, recall_pair(t, b));
    accumulate(r.bridge_to_target, recall_pair(b, t));
  }
  const double inv = 1.0 / static_cast<double>(per_concept);
  for (auto* p : {&r.target_to_text, &r.text_to_target, &r.target_to_bridge, &r.bridge_to_target}) scale(*p, inv);
  return r;
}

Matrix text_prototypes(const Model& model, const AlignmentPath& path, const SyntheticWorld& world,
                       std::size_t text_modality) {
  return embed(model, path, text_modality, render_concepts(world, text_modality)).shared;
}

std::vector<std::uint32_t> attribute_labels(const Dataset& data, std::size_t modality, std::size_t clusters,
                                            std::uint64_t seed) {
  auto rows = data.specific_latents(modality).to_rows();
  Rng rng(mix_seed(seed, 0xa77));
  auto km = kmeans_detailed(rows, clusters, rng, 100);
  return {km.assignment.begin(), km.assignment.end()};
}

namespace {

struct PathEmbeddings {
  PathRoles roles;
  ModalityEmbeddings target, text, bridge;
};

PathEmbeddings embed_path(const Model& model, const Dataset& data) {
  if (model.paths.empty()) throw Error(ErrorKind::InvalidSpec, "model has no alignment path");
  const auto& path = model.paths.front();
  PathEmbeddings e;
  e.roles = path_roles(model, path);
  e.target = embed(model, path, e.roles.target, data.observations(e.roles.target));
  e.text = embed(model, path, e.roles.text, data.observations(e.roles.text));
  e.bridge = embed(model, path, e.roles.bridge, data.observations(e.roles.bridge));
  return e;
}

EvalSnapshot snapshot_from(const Model& model, const Dataset& data, const PathEmbeddings& e) {
  const auto& spec = data.world.spec;
  EvalSnapshot s;
  s.retrieval = retrieval_episodes(e.target.shared, e.text.shared, e.bridge.shared, spec.concepts,
                                   spec.samples_per_concept);
  Matrix protos = text_prototypes(model, model.paths.front(), data.world, e.roles.text);
  auto labels = data.concepts();
  s.zero_shot = zero_shot_accuracy(e.target.shared, labels, protos);
  return s;
}

}  // namespace

EvalSnapshot eval_snapshot(const Model& model, const Dataset& data) {
  return snapshot_from(model, data, embed_path(model, data));
}

EvalReport evaluate(const Model& model, const Dataset& data, std::uint64_t seed) {
  auto e = embed_path(model, data);
  const auto& spec = data.world.spec;
  const auto& path = model.paths.front();
  EvalReport r;
  r.snapshot = snapshot_from(model, data, e);

  auto concepts = data.concepts();
  auto attrs = attribute_labels(data, e.roles.target, 4, seed);
  const Matrix& sh = e.target.shared;
  const Matrix& sp = *e.target.specific;
  auto probe = [&](const Matrix& x, const std::vector<std::uint32_t>& y, std::uint64_t salt) {
    Rng rng(mix_seed(seed, salt));
    return linear_probe_accuracy(x, y, rng);
  };
  // Same split for every probe so the comparisons are paired.
  r.probe_shared_concept = probe(sh, concepts, 0x9b);
  r.probe_specific_concept = probe(sp, concepts, 0x9b);
  r.probe_shared_attr = probe(sh, attrs, 0x9b);
  r.probe_specific_attr = probe(sp, attrs, 0x9b);

  r.similarity = similarity_stats(sh, sp, concepts);

  // Per concept, the first quarter of the samples query the rest.
  const std::size_t per = spec.samples_per_concept;
  const std::size_t nq = std::max<std::size_t>(1, per / 4);
  std::vector<std::size_t> qi, gi;
  for (std::size_t i = 0; i < data.size(); ++i) ((i % per) < nq ? qi : gi).push_back(i);
  auto labels_of = [](const std::vector<std::uint32_t>& all, const std::vector<std::size_t>& idx) {
    std::vector<std::uint32_t> out;
    for (auto i : idx) out.push_back(all[i]);
    return out;
  };
  auto qc = labels_of(concepts, qi), qa = labels_of(attrs, qi);
  auto gc = labels_of(concepts, gi), ga = labels_of(attrs, gi);
  Matrix both = concat_columns(sh, sp);
  auto fg = [&](const Matrix& m) {
    return fine_grained_recall(select_rows(m, qi), qc, qa, select_rows(m, gi), gc, ga, 10);
  };
  if (!gi.empty()) {
    r.concat_shared = fg(sh);
    r.concat_specific = fg(sp);
    r.concat_both = fg(both);
  }

  std::vector<std::size_t> shared_codes;
  for (const auto* m : {&e.text, &e.bridge, &e.target}) {
    auto f = flat_codes(m->shared_codes);
    shared_codes.insert(shared_codes.end(), f.begin(), f.end());
  }
  r.usage.emplace_back("shared", usage_stats(path.codebooks.shared.codebook().size(), shared_codes));
  for (const auto& [mod, q] : path.codebooks.specific) {
    const ModalityEmbeddings& m = mod == e.roles.target ? e.target : e.bridge;
    if (mod != e.roles.target && mod != e.roles.bridge) continue;
    r.usage.emplace_back("spec_" + model.modalities[mod].name,
                         usage_stats(q.codebook().size(), flat_codes(m.specific_codes)));
  }
  return r;
}

}  // namespace msvq
