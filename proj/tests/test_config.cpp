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

#include <string>

#include "doctest.h"
#include "msvq/config.hpp"
#include "msvq/embedding_dump.hpp"

using namespace msvq;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    return e.what();
  }
  FAIL("expected ConfigError");
  return {};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("config parser reads flat keys, comments and overrides") {
  RunConfig rc = parse_config(
      "# experiment\n"
      "seed = 11\n"
      "steps=300   # inline comment\n"
      "\n"
      "codebook.shared.K = 32\n"
      "codebook.spec.K = 12\n"
      "codebook.d = 32\n"
      "codebook.m = 4\n"
      "loss.orth.enabled = false\n"
      "loss.mode = manual\n"
      "loss.cm.weight = 2.5\n"
      "lr = 1e-3\n"
      "eta = 0.1\n"
      "gamma = 0.95\n"
      "reinit = off\n"
      "synth.noise = 0.1\n"
      "synth.obs = 24\n");
  CHECK(rc.seed_set);
  CHECK(rc.train.seed == 11);
  CHECK(rc.train.steps == 300);
  CHECK(rc.train.shared_entries == 32);
  CHECK(rc.train.spec_entries == 12);
  CHECK(rc.train.shape.embed_dim == 32);
  CHECK(rc.train.slots == 4);
  CHECK_FALSE(rc.train.is_enabled(LossName::Orth));
  CHECK(rc.train.mode == WeightMode::Manual);
  CHECK(rc.train.manual_weights[loss_index(LossName::Cm)] == 2.5);
  CHECK(rc.train.lr == 1e-3);
  CHECK(rc.train.temperature == 0.1);
  CHECK(rc.train.decay == 0.95);
  CHECK_FALSE(rc.train.reinit);
  CHECK(rc.train.data.noise == 0.1);
  for (const auto& m : rc.train.data.modalities) CHECK(m.obs_dim == 24);
}

TEST_CASE("missing seed is reported by name") {
  RunConfig rc = parse_config("steps = 10\n");
  CHECK_FALSE(rc.seed_set);
  try {
    require_seed(rc);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    CHECK(contains(e.what(), "'seed'"));
  }
}

TEST_CASE("config errors name the line and the field") {
  CHECK(contains(config_error("seed = 1\nbogus.key = 3\n"), "line 2"));
  CHECK(contains(config_error("seed = 1\nbogus.key = 3\n"), "bogus.key"));
  CHECK(contains(config_error("seed = x\n"), "'seed'"));
  CHECK(contains(config_error("seed = 1\nsteps = -3\n"), "'steps'"));
  CHECK(contains(config_error("seed = 1\nlr = nan\n"), "'lr'"));
  CHECK(contains(config_error("seed = 1\nreinit = maybe\n"), "'reinit'"));
  CHECK(contains(config_error("seed = 1\nseed = 2\n"), "duplicate"));
  CHECK(contains(config_error("seed = 1\njust words\n"), "line 2"));
  CHECK(contains(config_error("seed = 1\nsteps =\n"), "missing value"));
  CHECK(contains(config_error("preset = huge\n"), "'preset'"));
  CHECK(contains(config_error("seed = 1\ncodebook.shared.K = 0\n"), "codebook.shared.K"));
  // Cross-field check runs after parsing.
  CHECK(contains(config_error("seed = 1\ncodebook.d = 64\ncodebook.m = 7\n"), "codebook.m"));
}

TEST_CASE("presets") {
  const TrainConfig desk = preset_config("desk");
  CHECK(desk.shared_entries == 64);
  CHECK(desk.spec_entries == 16);
  CHECK(desk.shape.embed_dim == 64);
  CHECK(desk.slots == 8);

  const TrainConfig paper = preset_config("paper");
  CHECK(paper.shared_entries == 1024);
  CHECK(paper.spec_entries == 256);
  CHECK(paper.shape.embed_dim / paper.slots == 8);

  // Cumulative rows; commitment always on.
  const LossName order[] = {LossName::Cm, LossName::Cctr, LossName::Orth, LossName::Recon};
  for (int row = 1; row <= 5; ++row) {
    TrainConfig c = preset_config("tab7-row" + std::to_string(row));
    CHECK(c.is_enabled(LossName::Align));
    CHECK(c.is_enabled(LossName::Vq));
    for (int k = 0; k < 4; ++k) CHECK(c.is_enabled(order[k]) == (row >= k + 2));
    CHECK(c.is_enabled(LossName::Cuni) == c.is_enabled(LossName::Cctr));
    CHECK(c.is_enabled(LossName::Uni) == c.is_enabled(LossName::Orth));
  }
  CHECK(preset_config("tab7-row5").enabled == desk.enabled);
  CHECK_THROWS_AS(preset_config("tab7-row6"), Error);

  // The preset applies first regardless of where it appears.
  RunConfig rc = parse_config("codebook.spec.K = 20\npreset = paper\nseed = 1\n");
  CHECK(rc.preset == "paper");
  CHECK(rc.train.shared_entries == 1024);
  CHECK(rc.train.spec_entries == 20);
}

namespace {

Vec normals(Rng& rng, std::size_t n) {
  Vec v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

EmbeddingDump sample_dump(bool codes) {
  Rng rng(5);
  EmbeddingDump d;
  d.dim = 6;
  d.codes_per_vector = codes ? 3 : 0;
  for (std::uint32_t i = 0; i < 7; ++i) {
    EmbeddingRecord r;
    r.label = i * 3;
    r.modality = static_cast<std::uint8_t>(i % 3);
    r.shared = normals(rng, 6);
    if (codes) r.shared_codes = {i, i + 1, 2};
    if (i % 3) {
      r.specific = normals(rng, 6);
      if (codes) r.specific_codes = {0, 1, i};
    }
    d.records.push_back(r);
  }
  return d;
}

}  // namespace

TEST_CASE("embedding dump round trip is field exact after f32 rounding") {
  for (bool codes : {false, true}) {
    EmbeddingDump d = sample_dump(codes);
    auto bytes = d.save();
    EmbeddingDump back = EmbeddingDump::load(bytes);
    d.round_to_f32();
    CHECK(back == d);
    CHECK(back.save() == bytes);
  }
}

TEST_CASE("embedding dump rejects corrupt input") {
  auto bytes = sample_dump(true).save();
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(EmbeddingDump::load(truncated), Error);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(EmbeddingDump::load(trailing), Error);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(EmbeddingDump::load(magic), Error);
  auto count = bytes;
  count[16] = 0xff;  // low byte of the record count
  CHECK_THROWS_AS(EmbeddingDump::load(count), Error);

  EmbeddingDump bad = sample_dump(true);
  bad.records[2].shared.pop_back();
  CHECK_THROWS_AS(bad.save(), Error);
}
