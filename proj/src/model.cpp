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

#include "msvq/model.hpp"

#include <cmath>
#include <string>

namespace msvq {

namespace {

constexpr char kModelMagic[] = "CBMD";
constexpr std::uint32_t kModelVersion = 1;

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void check_grad_shape(const Matrix& g, const Matrix& ref, const char* what) {
  if (!g.same_shape(ref))
    throw Error(ErrorKind::ShapeMismatch, std::string("gradient shape mismatch for ") + what);
}

// Backward of row-wise y = x / ||x||.
Matrix normalize_rows_backward(const Matrix& x, const Matrix& y, const Matrix& gy) {
  Matrix gx(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double n = norm(x.row(i));
    double proj = dot(y.row(i), gy.row(i));
    auto yi = y.row(i), gi = gy.row(i);
    auto out = gx.row(i);
    for (std::size_t j = 0; j < x.cols; ++j) out[j] = (gi[j] - yi[j] * proj) / n;
  }
  return gx;
}

// Backward of per-slot normalization: s_h = v_h / ||v_h||.
Matrix slot_normalize_backward(const Matrix& v, const Matrix& s, const Matrix& gs, std::size_t slots) {
  std::size_t w = v.cols / slots;
  Matrix gv(v.rows, v.cols);
  for (std::size_t i = 0; i < v.rows; ++i) {
    for (std::size_t h = 0; h < slots; ++h) {
      auto vs = v.row(i).subspan(h * w, w);
      auto ss = s.row(i).subspan(h * w, w);
      auto gss = gs.row(i).subspan(h * w, w);
      auto out = gv.row(i).subspan(h * w, w);
      double n = norm(vs);
      double proj = dot(ss, gss);
      for (std::size_t j = 0; j < w; ++j) out[j] = (gss[j] - ss[j] * proj) / n;
    }
  }
  return gv;
}

StreamTrace run_stream(const DenseNet& proj, const CompositionalQuantizer& q, const Matrix& hidden,
                       const std::vector<std::vector<std::uint32_t>>* frozen) {
  StreamTrace t;
  t.raw = proj.forward(hidden, &t.proj_cache);
  t.unit = t.raw;
  for (std::size_t i = 0; i < t.unit.rows; ++i) l2_normalize_inplace(t.unit.row(i));
  std::size_t n = t.unit.rows, d = t.unit.cols, m = q.slots(), w = q.sub_dim();
  if (d != q.dim()) throw Error(ErrorKind::DimMismatch, "embedding width does not match quantizer");
  t.slots = Matrix(n, d);
  t.quantized = Matrix(n, d);
  t.codes.resize(n);
  if (frozen == nullptr) {
    auto batch = q.quantize_batch(t.unit);
    for (std::size_t i = 0; i < n; ++i) {
      auto& r = batch.results[i];
      std::copy(r.normalized.begin(), r.normalized.end(), t.slots.row(i).begin());
      std::copy(r.quantized.begin(), r.quantized.end(), t.quantized.row(i).begin());
      t.codes[i] = std::move(r.codes);
    }
  } else {
    if (frozen->size() != n) throw Error(ErrorKind::ShapeMismatch, "frozen code count mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& codes = (*frozen)[i];
      if (codes.size() != m) throw Error(ErrorKind::ShapeMismatch, "frozen code width mismatch");
      auto r = q.quantize(t.unit.row(i));  // for the normalized slots only
      std::copy(r.normalized.begin(), r.normalized.end(), t.slots.row(i).begin());
      for (std::size_t h = 0; h < m; ++h) {
        auto e = q.codebook().entry(codes[h]);
        std::copy(e.begin(), e.end(), t.quantized.row(i).begin() + h * w);
      }
      t.codes[i] = codes;
    }
  }
  t.quantized_unit = t.quantized;
  double inv = 1.0 / std::sqrt(static_cast<double>(m));
  for (double& v : t.quantized_unit.data) v *= inv;
  return t;
}

Matrix stream_backward(const DenseNet& proj, const StreamTrace& t, const StreamGrads& g,
                       std::size_t slots, bool straight_through, DenseNet& proj_grads) {
  Matrix gs = g.slots.rows ? g.slots : Matrix(t.slots.rows, t.slots.cols);
  check_grad_shape(gs, t.slots, "slots");
  if (straight_through && g.quantized_unit.rows) {
    check_grad_shape(g.quantized_unit, t.quantized_unit, "quantized embedding");
    double inv = 1.0 / std::sqrt(static_cast<double>(slots));
    for (std::size_t k = 0; k < gs.data.size(); ++k) gs.data[k] += inv * g.quantized_unit.data[k];
  }
  Matrix g_unit = slot_normalize_backward(t.unit, t.slots, gs, slots);
  Matrix g_raw = normalize_rows_backward(t.raw, t.unit, g_unit);
  return proj.backward(t.proj_cache, g_raw, proj_grads);
}

void require_trace(const StreamTrace& t, const DenseNet& proj) {
  if (t.proj_cache.activations.size() != proj.layers().size() + 1 || t.unit.rows == 0)
    throw Error(ErrorKind::IncompleteTrace, "stream trace lacks forward intermediates");
}

}  // namespace

// ----------------------------------------------------------------------------
// DenseNet

DenseNet::DenseNet(std::vector<std::size_t> dims, Rng& rng) : DenseNet(zeros(std::move(dims))) {
  for (auto& l : layers_) {
    double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows + l.weight.cols));
    for (double& w : l.weight.data) w = rng.uniform(-limit, limit);
  }
}

DenseNet DenseNet::zeros(std::vector<std::size_t> dims) {
  if (dims.size() < 2) throw Error(ErrorKind::InvalidSpec, "network needs at least two widths");
  for (auto w : dims)
    if (w == 0) throw Error(ErrorKind::InvalidSpec, "zero-width layer");
  DenseNet net;
  net.dims_ = std::move(dims);
  for (std::size_t l = 0; l + 1 < net.dims_.size(); ++l)
    net.layers_.push_back({Matrix(net.dims_[l + 1], net.dims_[l]), Vec(net.dims_[l + 1], 0.0)});
  return net;
}

std::size_t DenseNet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.data.size() + l.bias.size();
  return n;
}

Matrix DenseNet::forward(const Matrix& x, Cache* cache) const {
  if (x.cols != in_dim()) throw Error(ErrorKind::DimMismatch, "network input width mismatch");
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  Matrix a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    Matrix out(a.rows, L.weight.rows);
    bool hidden = l + 1 < layers_.size();
    for (std::size_t i = 0; i < a.rows; ++i) {
      auto ai = a.row(i);
      auto oi = out.row(i);
      for (std::size_t o = 0; o < L.weight.rows; ++o) {
        double v = L.bias[o] + dot(L.weight.row(o), ai);
        oi[o] = hidden ? std::tanh(v) : v;
      }
    }
    a = std::move(out);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

Matrix DenseNet::backward(const Cache& cache, const Matrix& grad_out, DenseNet& grads) const {
  if (cache.activations.size() != layers_.size() + 1)
    throw Error(ErrorKind::IncompleteTrace, "network cache does not match depth");
  if (grads.dims_ != dims_) throw Error(ErrorKind::ShapeMismatch, "gradient network shape mismatch");
  check_grad_shape(grad_out, cache.activations.back(), "network output");
  Matrix g = grad_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& L = layers_[l];
    auto& G = grads.layers_[l];
    const Matrix& out = cache.activations[l + 1];
    const Matrix& in = cache.activations[l];
    if (l + 1 < layers_.size())
      for (std::size_t k = 0; k < g.data.size(); ++k) g.data[k] *= 1.0 - out.data[k] * out.data[k];
    Matrix gin(in.rows, in.cols);
    for (std::size_t i = 0; i < g.rows; ++i) {
      auto gi = g.row(i);
      auto xi = in.row(i);
      auto gini = gin.row(i);
      for (std::size_t o = 0; o < L.weight.rows; ++o) {
        double go = gi[o];
        if (go == 0.0) continue;
        G.bias[o] += go;
        auto wr = L.weight.row(o);
        auto gw = G.weight.row(o);
        for (std::size_t j = 0; j < xi.size(); ++j) {
          gw[j] += go * xi[j];
          gini[j] += go * wr[j];
        }
      }
    }
    g = std::move(gin);
  }
  return g;
}

void DenseNet::write(io::Writer& w) const {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dims_.size()));
  for (auto d : dims_) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for_each_param([&](double v) { w.put<float>(static_cast<float>(v)); });
}

DenseNet DenseNet::read(io::Reader& r) {
  auto n = r.get<std::uint32_t>();
  if (n < 2 || n > 64) throw Error(ErrorKind::CorruptContainer, "implausible network depth");
  std::vector<std::size_t> dims(n);
  for (auto& d : dims) {
    d = r.get<std::uint32_t>();
    if (d == 0 || d > (1u << 20)) throw Error(ErrorKind::CorruptContainer, "implausible layer width");
  }
  DenseNet net = zeros(std::move(dims));
  if (r.remaining() / sizeof(float) < net.param_count())
    throw Error(ErrorKind::CorruptContainer, "truncated network parameters");
  net.for_each_param([&](double& v) { v = r.get<float>(); });
  return net;
}

// ----------------------------------------------------------------------------
// Heads and model

ModalityHead::ModalityHead(const ModalitySpec& spec, const ModelShape& shape, Rng& rng) {
  std::vector<std::size_t> enc{spec.obs_dim};
  for (std::size_t l = 0; l < shape.hidden_layers + 1; ++l) enc.push_back(shape.hidden);
  encoder = DenseNet(enc, rng);
  shared_proj = DenseNet({shape.hidden, shape.embed_dim}, rng);
  if (spec.has_specific) {
    spec_proj = DenseNet({shape.hidden, shape.embed_dim}, rng);
    decoder = DenseNet({2 * shape.embed_dim, shape.decoder_hidden, spec.obs_dim}, rng);
  }
}

ModalityHead ModalityHead::zeros_like() const {
  ModalityHead h;
  h.encoder = DenseNet::zeros(encoder.dims());
  h.shared_proj = DenseNet::zeros(shared_proj.dims());
  if (spec_proj) h.spec_proj = DenseNet::zeros(spec_proj->dims());
  if (decoder) h.decoder = DenseNet::zeros(decoder->dims());
  return h;
}

std::size_t ModalityHead::param_count() const {
  std::size_t n = 0;
  for_each_param([&](double) { ++n; });
  return n;
}

Model Model::create(std::vector<ModalitySpec> modalities, const ModelShape& shape, std::size_t slots,
                    Rng& rng) {
  if (modalities.empty()) throw Error(ErrorKind::InvalidSpec, "model needs at least one modality");
  if (slots == 0 || shape.embed_dim % slots != 0)
    throw Error(ErrorKind::DimMismatch, "embedding width must be a multiple of the slot count");
  Model model;
  model.slots = slots;
  for (const auto& spec : modalities) {
    if (spec.obs_dim == 0) throw Error(ErrorKind::InvalidSpec, "modality with zero input width");
    model.heads.emplace_back(spec, shape, rng);
  }
  model.modalities = std::move(modalities);
  return model;
}

void Model::round_to_f32() {
  for (auto& h : heads) h.for_each_param([](double& v) { v = f32(v); });
  for (auto& p : paths) {
    p.codebooks.shared.codebook().round_to_f32();
    for (auto& [_, q] : p.codebooks.specific) q.codebook().round_to_f32();
  }
}

io::Bytes Model::save() const {
  io::Writer w;
  w.magic(kModelMagic);
  w.put<std::uint32_t>(kModelVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(slots));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(heads.size()));
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto& spec = modalities[i];
    const auto& h = heads[i];
    w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.name.size()));
    w.raw({reinterpret_cast<const std::uint8_t*>(spec.name.data()), spec.name.size()});
    w.put<std::uint8_t>(h.has_specific() ? 1 : 0);
    h.encoder.write(w);
    h.shared_proj.write(w);
    if (h.has_specific()) {
      h.spec_proj->write(w);
      h.decoder->write(w);
    }
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(paths.size()));
  for (const auto& p : paths) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.target));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.bridges.size()));
    for (auto b : p.bridges) w.put<std::uint32_t>(static_cast<std::uint32_t>(b));
    p.codebooks.shared.write(w);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.codebooks.specific.size()));
    for (const auto& [mod, q] : p.codebooks.specific) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(mod));
      q.write(w);
    }
  }
  return std::move(w).bytes();
}

Model Model::load(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic(kModelMagic);
  if (r.get<std::uint32_t>() != kModelVersion)
    throw Error(ErrorKind::CorruptContainer, "unsupported model version");
  Model model;
  model.slots = r.get<std::uint32_t>();
  auto n_heads = r.get<std::uint32_t>();
  if (model.slots == 0 || n_heads == 0 || n_heads > 1024)
    throw Error(ErrorKind::CorruptContainer, "implausible model header");
  for (std::uint32_t i = 0; i < n_heads; ++i) {
    ModalitySpec spec;
    auto len = r.get<std::uint32_t>();
    auto name = r.take(len);
    spec.name.assign(name.begin(), name.end());
    auto flag = r.get<std::uint8_t>();
    if (flag > 1) throw Error(ErrorKind::CorruptContainer, "bad head flag");
    ModalityHead h;
    h.encoder = DenseNet::read(r);
    h.shared_proj = DenseNet::read(r);
    if (flag) {
      h.spec_proj = DenseNet::read(r);
      h.decoder = DenseNet::read(r);
    }
    spec.obs_dim = h.encoder.in_dim();
    spec.has_specific = flag == 1;
    if (h.shared_proj.in_dim() != h.encoder.out_dim() ||
        h.shared_proj.out_dim() % model.slots != 0 ||
        (flag && (h.spec_proj->in_dim() != h.encoder.out_dim() ||
                  h.decoder->in_dim() != 2 * h.shared_proj.out_dim() ||
                  h.decoder->out_dim() != spec.obs_dim)))
      throw Error(ErrorKind::CorruptContainer, "inconsistent head shapes");
    model.modalities.push_back(std::move(spec));
    model.heads.push_back(std::move(h));
  }
  auto n_paths = r.get<std::uint32_t>();
  if (n_paths > 1024) throw Error(ErrorKind::CorruptContainer, "implausible path count");
  for (std::uint32_t i = 0; i < n_paths; ++i) {
    AlignmentPath p;
    p.target = r.get<std::uint32_t>();
    auto nb = r.get<std::uint32_t>();
    if (p.target >= n_heads || nb > n_heads) throw Error(ErrorKind::CorruptContainer, "bad path");
    for (std::uint32_t b = 0; b < nb; ++b) {
      p.bridges.push_back(r.get<std::uint32_t>());
      if (p.bridges.back() >= n_heads) throw Error(ErrorKind::CorruptContainer, "bad bridge index");
    }
    p.codebooks.shared = CompositionalQuantizer::read(r);
    auto ns = r.get<std::uint32_t>();
    if (ns > n_heads) throw Error(ErrorKind::CorruptContainer, "bad specific count");
    for (std::uint32_t s = 0; s < ns; ++s) {
      auto mod = r.get<std::uint32_t>();
      if (mod >= n_heads) throw Error(ErrorKind::CorruptContainer, "bad specific modality");
      p.codebooks.specific.emplace(mod, CompositionalQuantizer::read(r));
    }
    model.paths.push_back(std::move(p));
  }
  r.expect_end();
  return model;
}

// ----------------------------------------------------------------------------
// Forward / backward

ModalityTrace forward(const ModalityHead& head, const ModalityCodebookSet& set, std::size_t modality,
                      const Matrix& x, const FrozenCodes* frozen) {
  if (x.rows == 0) throw Error(ErrorKind::EmptyInput, "empty batch");
  ModalityTrace t;
  t.modality = modality;
  t.input = x;
  Matrix hidden = head.encoder.forward(x, &t.encoder_cache);
  t.shared = run_stream(head.shared_proj, set.shared, hidden, frozen ? &frozen->shared : nullptr);
  if (head.has_specific()) {
    const auto& q = set.specific_for(modality);
    t.specific = run_stream(*head.spec_proj, q, hidden, frozen ? &frozen->specific : nullptr);
  }
  return t;
}

Matrix reconstruct(const DenseNet& decoder, ModalityTrace& trace) {
  if (!trace.specific) throw Error(ErrorKind::MissingSpecific, "reconstruction needs a specific embedding");
  const Matrix& a = trace.shared.quantized_unit;
  const Matrix& b = trace.specific->quantized_unit;
  Matrix in(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::copy(a.row(i).begin(), a.row(i).end(), in.row(i).begin());
    std::copy(b.row(i).begin(), b.row(i).end(), in.row(i).begin() + a.cols);
  }
  trace.reconstruction = decoder.forward(in, &trace.decoder_cache);
  return trace.reconstruction;
}

TraceGrads zero_grads(const ModalityTrace& trace) {
  TraceGrads g;
  auto make = [](const StreamTrace& s) {
    return StreamGrads{Matrix(s.unit.rows, s.unit.cols), Matrix(s.unit.rows, s.unit.cols)};
  };
  g.shared = make(trace.shared);
  if (trace.specific) g.specific = make(*trace.specific);
  if (trace.reconstruction.rows) g.reconstruction = Matrix(trace.reconstruction.rows, trace.reconstruction.cols);
  return g;
}

ModalityHead backward(const ModalityHead& head, const ModalityTrace& trace, const TraceGrads& grads,
                      const BackwardOptions& options) {
  if (trace.encoder_cache.activations.size() != head.encoder.layers().size() + 1)
    throw Error(ErrorKind::IncompleteTrace, "trace lacks encoder intermediates");
  require_trace(trace.shared, head.shared_proj);
  if (head.has_specific() && !trace.specific)
    throw Error(ErrorKind::IncompleteTrace, "trace lacks the specific stream");

  ModalityHead out = head.zeros_like();
  std::size_t slots = trace.shared.codes.front().size();
  bool st = options.straight_through;

  StreamGrads shared_g = grads.shared;
  std::optional<StreamGrads> spec_g = grads.specific;

  if (grads.reconstruction.rows) {
    if (!head.decoder || trace.decoder_cache.activations.empty())
      throw Error(ErrorKind::IncompleteTrace, "reconstruction gradient without decoder pass");
    Matrix gin = head.decoder->backward(trace.decoder_cache, grads.reconstruction, *out.decoder);
    std::size_t d = trace.shared.quantized_unit.cols;
    auto add_cols = [&](StreamGrads& sg, const Matrix& ref, std::size_t offset) {
      if (!sg.quantized_unit.rows) sg.quantized_unit = Matrix(ref.rows, ref.cols);
      for (std::size_t i = 0; i < ref.rows; ++i)
        for (std::size_t j = 0; j < d; ++j) sg.quantized_unit(i, j) += gin(i, offset + j);
    };
    add_cols(shared_g, trace.shared.quantized_unit, 0);
    if (!spec_g) spec_g = StreamGrads{};
    add_cols(*spec_g, trace.specific->quantized_unit, d);
  }

  Matrix g_hidden = stream_backward(head.shared_proj, trace.shared, shared_g, slots, st, out.shared_proj);
  if (head.has_specific() && spec_g) {
    require_trace(*trace.specific, *head.spec_proj);
    Matrix gs = stream_backward(*head.spec_proj, *trace.specific, *spec_g, slots, st, *out.spec_proj);
    for (std::size_t k = 0; k < g_hidden.data.size(); ++k) g_hidden.data[k] += gs.data[k];
  }
  head.encoder.backward(trace.encoder_cache, g_hidden, out.encoder);
  return out;
}

void sgd_step(DenseNet& params, const DenseNet& grads, double lr) {
  if (params.dims() != grads.dims()) throw Error(ErrorKind::ShapeMismatch, "sgd shape mismatch");
  auto& pl = params.layers();
  const auto& gl = grads.layers();
  for (std::size_t l = 0; l < pl.size(); ++l) {
    for (std::size_t k = 0; k < pl[l].weight.data.size(); ++k) pl[l].weight.data[k] -= lr * gl[l].weight.data[k];
    for (std::size_t k = 0; k < pl[l].bias.size(); ++k) pl[l].bias[k] -= lr * gl[l].bias[k];
  }
}

void sgd_step(ModalityHead& params, const ModalityHead& grads, double lr) {
  if (params.has_specific() != grads.has_specific())
    throw Error(ErrorKind::ShapeMismatch, "sgd head layout mismatch");
  sgd_step(params.encoder, grads.encoder, lr);
  sgd_step(params.shared_proj, grads.shared_proj, lr);
  if (params.spec_proj) {
    sgd_step(*params.spec_proj, *grads.spec_proj, lr);
    sgd_step(*params.decoder, *grads.decoder, lr);
  }
}

}  // namespace msvq
