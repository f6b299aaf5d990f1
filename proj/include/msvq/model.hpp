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
#include <string>
#include <vector>

#include "msvq/binary_io.hpp"
#include "msvq/numerics.hpp"
#include "msvq/quantizer.hpp"

namespace msvq {

struct DenseLayer {
  Matrix weight;  // out x in
  Vec bias;       // out
  bool operator==(const DenseLayer&) const = default;
};

// Fully connected stack: tanh on hidden layers, identity on the output layer.
class DenseNet {
 public:
  // Post-activation outputs; activations[0] is the input.
  struct Cache {
    std::vector<Matrix> activations;
  };

  DenseNet() = default;
  // Xavier-uniform weights from rng, zero biases.
  DenseNet(std::vector<std::size_t> dims, Rng& rng);
  static DenseNet zeros(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t in_dim() const { return dims_.front(); }
  std::size_t out_dim() const { return dims_.back(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t param_count() const;

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  // Adds parameter gradients into grads (same shape as *this) and returns dL/dinput.
  Matrix backward(const Cache& cache, const Matrix& grad_out, DenseNet& grads) const;

  // Visits every parameter in declaration order: per layer, weight row-major then bias.
  template <typename Fn>
  void for_each_param(Fn&& fn) {
    for (auto& l : layers_) {
      for (double& w : l.weight.data) fn(w);
      for (double& b : l.bias) fn(b);
    }
  }
  template <typename Fn>
  void for_each_param(Fn&& fn) const {
    for (const auto& l : layers_) {
      for (double w : l.weight.data) fn(w);
      for (double b : l.bias) fn(b);
    }
  }

  void write(io::Writer& w) const;
  static DenseNet read(io::Reader& r);

  bool operator==(const DenseNet&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
};

struct ModalitySpec {
  std::string name;
  std::size_t obs_dim = 0;
  bool has_specific = true;  // text carries shared semantics only
  bool operator==(const ModalitySpec&) const = default;
};

struct ModelShape {
  std::size_t hidden = 64;
  std::size_t hidden_layers = 2;
  std::size_t embed_dim = 64;  // d
  std::size_t decoder_hidden = 64;
};

// Encoder, shared/specific projection heads and reconstruction decoder of one modality.
struct ModalityHead {
  DenseNet encoder;
  DenseNet shared_proj;
  std::optional<DenseNet> spec_proj;
  std::optional<DenseNet> decoder;

  ModalityHead() = default;
  ModalityHead(const ModalitySpec& spec, const ModelShape& shape, Rng& rng);

  bool has_specific() const { return spec_proj.has_value(); }
  ModalityHead zeros_like() const;
  std::size_t param_count() const;

  template <typename Fn>
  void for_each_param(Fn&& fn) {
    encoder.for_each_param(fn);
    shared_proj.for_each_param(fn);
    if (spec_proj) spec_proj->for_each_param(fn);
    if (decoder) decoder->for_each_param(fn);
  }
  template <typename Fn>
  void for_each_param(Fn&& fn) const {
    encoder.for_each_param(fn);
    shared_proj.for_each_param(fn);
    if (spec_proj) spec_proj->for_each_param(fn);
    if (decoder) decoder->for_each_param(fn);
  }

  bool operator==(const ModalityHead&) const = default;
};

// One target modality aligned against its bridging modalities, with its own codebooks.
struct AlignmentPath {
  std::size_t target = 0;
  std::vector<std::size_t> bridges;
  ModalityCodebookSet codebooks;
  bool operator==(const AlignmentPath&) const = default;
};

struct Model {
  std::vector<ModalitySpec> modalities;
  std::vector<ModalityHead> heads;
  std::vector<AlignmentPath> paths;
  std::size_t slots = 8;  // m

  static Model create(std::vector<ModalitySpec> modalities, const ModelShape& shape,
                      std::size_t slots, Rng& rng);

  std::size_t embed_dim() const { return heads.front().shared_proj.out_dim(); }
  void round_to_f32();

  io::Bytes save() const;
  static Model load(std::span<const std::uint8_t> bytes);

  bool operator==(const Model&) const = default;
};

// ----------------------------------------------------------------------------
// Forward / backward

// One embedding stream (shared or specific) of one modality.
struct StreamTrace {
  DenseNet::Cache proj_cache;
  Matrix raw;             // projection output
  Matrix unit;            // raw / ||raw||, the pre-quantization embedding
  Matrix slots;           // unit with every slot renormalized; what the codebook sees
  Matrix quantized;       // concatenated codevectors, ||row|| = sqrt(m)
  Matrix quantized_unit;  // quantized / sqrt(m); consumed by the embedding losses
  std::vector<std::vector<std::uint32_t>> codes;
};

struct ModalityTrace {
  std::size_t modality = 0;
  Matrix input;
  DenseNet::Cache encoder_cache;
  StreamTrace shared;
  std::optional<StreamTrace> specific;
  // Populated by reconstruct().
  DenseNet::Cache decoder_cache;
  Matrix reconstruction;
};

// Codes to reuse instead of nearest-neighbour search (for frozen-code checks).
struct FrozenCodes {
  std::vector<std::vector<std::uint32_t>> shared;
  std::vector<std::vector<std::uint32_t>> specific;
};

ModalityTrace forward(const ModalityHead& head, const ModalityCodebookSet& set, std::size_t modality,
                      const Matrix& x, const FrozenCodes* frozen = nullptr);

// x_hat = decoder([q_shared, q_spec]); stores the decoder cache in the trace.
Matrix reconstruct(const DenseNet& decoder, ModalityTrace& trace);

// Loss gradients landing on one stream.
struct StreamGrads {
  Matrix quantized_unit;  // passed straight through to `slots`
  Matrix slots;           // losses that read the unquantized sub-vectors
};

struct TraceGrads {
  StreamGrads shared;
  std::optional<StreamGrads> specific;
  Matrix reconstruction;  // dL/dx_hat; empty when not reconstructed
};

TraceGrads zero_grads(const ModalityTrace& trace);

struct BackwardOptions {
  // When false the quantizer blocks gradients instead of copying them through.
  bool straight_through = true;
};

// Gradients for every trainable parameter of the head. Codebooks receive nothing.
ModalityHead backward(const ModalityHead& head, const ModalityTrace& trace, const TraceGrads& grads,
                      const BackwardOptions& options = {});

void sgd_step(ModalityHead& params, const ModalityHead& grads, double lr);
void sgd_step(DenseNet& params, const DenseNet& grads, double lr);

}  // namespace msvq
