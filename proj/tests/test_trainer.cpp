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

#include <cmath>

#include "doctest.h"
#include "msvq/trainer.hpp"

using namespace msvq;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.data.samples_per_concept = 8;
  c.shape.hidden = 16;
  c.shape.hidden_layers = 1;
  c.shape.embed_dim = 16;
  c.shape.decoder_hidden = 16;
  c.slots = 2;
  c.shared_entries = 12;
  c.spec_entries = 10;
  c.steps = 20;
  c.eval_every = 10;
  c.init_samples = 512;
  return c;
}

Dataset train_data(const TrainConfig& c) {
  SyntheticSpec s = c.data;
  s.seed = c.seed;
  return generate(s, Split::Train);
}

}  // namespace

TEST_CASE("zero steps return the initialization and no metrics") {
  TrainConfig c = tiny_config();
  c.steps = 0;
  auto r = train(c);
  CHECK(r.rows.empty());
  CHECK(r.model == initialize(c, train_data(c)));
}

TEST_CASE("initialization seeds every codebook with unit entries") {
  TrainConfig c = tiny_config();
  Model m = initialize(c, train_data(c));
  REQUIRE(m.paths.size() == 1);
  const auto& p = m.paths.front();
  CHECK(p.target == 2);
  CHECK(p.bridges == std::vector<std::size_t>{0, 1});
  CHECK(p.codebooks.shared.codebook().size() == 12);
  CHECK_FALSE(p.codebooks.has_specific(0));
  CHECK(p.codebooks.specific_for(1).codebook().size() == 10);
  for (std::size_t k = 0; k < 12; ++k) CHECK(std::abs(norm(p.codebooks.shared.codebook().entry(k)) - 1.0) < 1e-9);
}

TEST_CASE("identical seeds give identical runs") {
  TrainConfig c = tiny_config();
  auto a = train(c);
  auto b = train(c);
  CHECK(metrics_csv(a) == metrics_csv(b));
  CHECK(a.model.save() == b.model.save());
  c.seed = 8;
  CHECK(metrics_csv(train(c)) != metrics_csv(a));
}

TEST_CASE("metrics rows carry every column") {
  TrainConfig c = tiny_config();
  auto r = train(c);
  REQUIRE(r.rows.size() == 20);
  auto csv = metrics_csv(r);
  auto header = csv.substr(0, csv.find('\n'));
  auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  CHECK(count(header) == 1 + 16 + 2 * 3 + 9);
  CHECK(count(metrics_row(r.rows[0])) == count(header));
  CHECK_FALSE(r.rows[0].eval.has_value());
  CHECK(r.rows[9].eval.has_value());
  CHECK(r.rows[19].eval.has_value());
  for (const auto& row : r.rows) CHECK(row.weights[loss_index(LossName::Align)] == 1.0);
}

TEST_CASE("disabling a term logs weight 0 and matches dropping its gradient") {
  for (LossName n : {LossName::Orth, LossName::Cm, LossName::Cuni, LossName::Recon}) {
    CAPTURE(loss_name(n));
    TrainConfig off = tiny_config();
    off.enabled[loss_index(n)] = false;
    TrainConfig zeroed = tiny_config();
    zeroed.zeroed_grads.insert(n);
    auto a = train(off);
    auto b = train(zeroed);
    CHECK(a.model.save() == b.model.save());
    for (std::size_t s = 0; s < a.rows.size(); ++s) {
      CHECK(a.rows[s].weights[loss_index(n)] == 0.0);
      CHECK(b.rows[s].weights[loss_index(n)] > 0.0);
      CHECK(a.rows[s].values == b.rows[s].values);
    }
  }
}

TEST_CASE("codebooks are fed exactly the sub-vectors they were assigned") {
  TrainConfig c = tiny_config();
  auto data = train_data(c);
  Model m = initialize(c, data);
  const auto& path = m.paths.front();
  std::vector<std::size_t> idx{0, 9, 17, 30};
  std::map<std::size_t, Matrix> obs;
  for (std::size_t mod = 0; mod < 3; ++mod) obs.emplace(mod, data.observations(mod, idx));
  auto traces = forward_path(m, path, obs);
  auto a = collect_assignments(path, traces);
  std::size_t fed = 0;
  for (const auto& [k, vs] : a.shared)
    for (const auto& v : vs) {
      CHECK(path.codebooks.shared.codebook().nearest(v).first == k);
      ++fed;
    }
  CHECK(fed == 3 * idx.size() * c.slots);
  for (const auto& [mod, asg] : a.specific)
    for (const auto& [k, vs] : asg)
      for (const auto& v : vs) CHECK(path.codebooks.specific_for(mod).codebook().nearest(v).first == k);
}

TEST_CASE("total objective gradient with frozen codes matches finite differences") {
  TrainConfig c = tiny_config();
  auto data = train_data(c);
  Model model = initialize(c, data);
  const AlignmentPath path = model.paths.front();
  std::vector<std::size_t> idx{3, 12};  // two concepts
  std::map<std::size_t, Matrix> obs;
  for (std::size_t mod = 0; mod < 3; ++mod) obs.emplace(mod, data.observations(mod, idx));

  auto base = forward_path(model, path, obs);
  std::map<std::size_t, FrozenCodes> frozen;
  for (const auto& [mod, t] : base.traces)
    frozen[mod] = {t.shared.codes, t.specific ? t.specific->codes : std::vector<std::vector<std::uint32_t>>{}};
  LossArray coef = {1.0, 0.7, 3.0, 0.5, 2.0, 0.9, 40.0, 0.3};

  auto total = [&](const Model& m) {
    auto t = forward_path(m, path, obs, &frozen);
    return path_objective(m, path, t, coef, c.temperature, c.commit_beta).total;
  };

  auto traces = forward_path(model, path, obs, &frozen);
  auto obj = path_objective(model, path, traces, coef, c.temperature, c.commit_beta);
  CHECK(obj.values[loss_index(LossName::Align)] > 0.0);

  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t mod = 0; mod < 3; ++mod) {
    ModalityHead g = backward(model.heads[mod], traces.traces.at(mod), obj.grads.at(mod),
                              {.straight_through = false});
    std::vector<double> analytic;
    g.for_each_param([&](double v) { analytic.push_back(v); });
    std::vector<double*> params;
    model.heads[mod].for_each_param([&](double& p) { params.push_back(&p); });
    REQUIRE(params.size() == analytic.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double orig = *params[i], h = 1e-5;
      *params[i] = orig + h;
      const double up = total(model);
      *params[i] = orig - h;
      const double down = total(model);
      *params[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      worst = std::max(worst, err);
      ++checked;
    }
  }
  CHECK(checked > 1000);
  CHECK(worst < 1e-4);
}

TEST_CASE("configuration validation") {
  auto expect_config_error = [](TrainConfig c) {
    try {
      validate(c);
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ConfigError);
    }
  };
  TrainConfig c = tiny_config();
  c.slots = 3;
  expect_config_error(c);
  c = tiny_config();
  c.spec_entries = 4;  // code contrast needs ten entries
  expect_config_error(c);
  c.enabled[loss_index(LossName::Cctr)] = false;
  validate(c);
  c = tiny_config();
  c.enabled[loss_index(LossName::Align)] = false;
  expect_config_error(c);
  c = tiny_config();
  c.data.noise = -1.0;
  expect_config_error(c);
}

TEST_CASE("alignment loss falls during training") {
  TrainConfig c = tiny_config();
  c.steps = 300;
  c.eval_every = 1000;
  auto r = train(c);
  auto mean_align = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += r.rows[i].values[loss_index(LossName::Align)];
    return s / static_cast<double>(to - from);
  };
  CHECK(mean_align(280, 300) < mean_align(40, 60));
}
