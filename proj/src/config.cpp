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

#include "msvq/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>

namespace msvq {

namespace {

[[noreturn]] void fail(std::size_t line, std::string_view field, const std::string& what) {
  std::string msg = line ? "line " + std::to_string(line) + ": " : std::string();
  msg += "field '" + std::string(field) + "': " + what;
  throw Error(ErrorKind::ConfigError, msg);
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::size_t line;
  std::string key;
  std::string value;
};

std::uint64_t parse_u64(const Entry& e) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (ec != std::errc() || p != e.value.data() + e.value.size())
    fail(e.line, e.key, "expected a non-negative integer, got '" + e.value + "'");
  return v;
}

std::size_t parse_count(const Entry& e) {
  auto v = parse_u64(e);
  if (v == 0) fail(e.line, e.key, "must be at least 1");
  return static_cast<std::size_t>(v);
}

double parse_real(const Entry& e) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (ec != std::errc() || p != e.value.data() + e.value.size() || !std::isfinite(v))
    fail(e.line, e.key, "expected a finite number, got '" + e.value + "'");
  return v;
}

bool parse_bool(const Entry& e) {
  if (e.value == "true" || e.value == "on" || e.value == "1") return true;
  if (e.value == "false" || e.value == "off" || e.value == "0") return false;
  fail(e.line, e.key, "expected true or false, got '" + e.value + "'");
}

using Setter = std::function<void(RunConfig&, const Entry&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["seed"] = [](RunConfig& c, const Entry& e) {
      c.train.seed = parse_u64(e);
      c.seed_set = true;
    };
    t["steps"] = [](RunConfig& c, const Entry& e) { c.train.steps = static_cast<std::size_t>(parse_u64(e)); };
    t["lr"] = [](RunConfig& c, const Entry& e) { c.train.lr = parse_real(e); };
    t["eta"] = [](RunConfig& c, const Entry& e) { c.train.temperature = parse_real(e); };
    t["gamma"] = [](RunConfig& c, const Entry& e) { c.train.decay = parse_real(e); };
    t["commit.beta"] = [](RunConfig& c, const Entry& e) { c.train.commit_beta = parse_real(e); };
    t["reinit"] = [](RunConfig& c, const Entry& e) { c.train.reinit = parse_bool(e); };
    t["eval.every"] = [](RunConfig& c, const Entry& e) { c.train.eval_every = parse_count(e); };
    t["init.samples"] = [](RunConfig& c, const Entry& e) { c.train.init_samples = parse_count(e); };
    t["codebook.shared.K"] = [](RunConfig& c, const Entry& e) { c.train.shared_entries = parse_count(e); };
    t["codebook.spec.K"] = [](RunConfig& c, const Entry& e) { c.train.spec_entries = parse_count(e); };
    t["codebook.d"] = [](RunConfig& c, const Entry& e) { c.train.shape.embed_dim = parse_count(e); };
    t["codebook.m"] = [](RunConfig& c, const Entry& e) { c.train.slots = parse_count(e); };
    t["model.hidden"] = [](RunConfig& c, const Entry& e) { c.train.shape.hidden = parse_count(e); };
    t["model.layers"] = [](RunConfig& c, const Entry& e) { c.train.shape.hidden_layers = parse_u64(e); };
    t["model.decoder_hidden"] = [](RunConfig& c, const Entry& e) { c.train.shape.decoder_hidden = parse_count(e); };
    t["loss.mode"] = [](RunConfig& c, const Entry& e) {
      if (e.value == "adaptive") c.train.mode = WeightMode::Adaptive;
      else if (e.value == "manual") c.train.mode = WeightMode::Manual;
      else fail(e.line, e.key, "expected adaptive or manual, got '" + e.value + "'");
    };
    t["synth.concepts"] = [](RunConfig& c, const Entry& e) { c.train.data.concepts = parse_count(e); };
    t["synth.p"] = [](RunConfig& c, const Entry& e) { c.train.data.shared_dim = parse_count(e); };
    t["synth.q"] = [](RunConfig& c, const Entry& e) { c.train.data.spec_dim = parse_count(e); };
    t["synth.noise"] = [](RunConfig& c, const Entry& e) { c.train.data.noise = parse_real(e); };
    t["synth.samples"] = [](RunConfig& c, const Entry& e) { c.train.data.samples_per_concept = parse_count(e); };
    t["synth.obs"] = [](RunConfig& c, const Entry& e) {
      auto d = parse_count(e);
      for (auto& m : c.train.data.modalities) m.obs_dim = d;
    };
    for (LossName n : kAllLosses) {
      const std::string base = "loss." + std::string(loss_name(n));
      t[base + ".enabled"] = [n](RunConfig& c, const Entry& e) { c.train.enabled[loss_index(n)] = parse_bool(e); };
      t[base + ".weight"] = [n](RunConfig& c, const Entry& e) {
        double w = parse_real(e);
        if (w < 0.0) fail(e.line, e.key, "must be non-negative");
        c.train.manual_weights[loss_index(n)] = w;
      };
    }
    return t;
  }();
  return table;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"desk", "paper", "tab7-row1", "tab7-row2", "tab7-row3", "tab7-row4", "tab7-row5"};
}

TrainConfig preset_config(std::string_view name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.shared_entries = 1024;
    c.spec_entries = 256;
    c.shape.embed_dim = 64;
    c.slots = 8;  // d* = 8
    return c;
  }
  const std::string_view prefix = "tab7-row";
  if (name.substr(0, prefix.size()) == prefix && name.size() == prefix.size() + 1) {
    const int row = name.back() - '0';
    if (row >= 1 && row <= 5) {
      auto set = [&](LossName n, bool on) { c.enabled[loss_index(n)] = on; };
      set(LossName::Cm, row >= 2);
      set(LossName::Cctr, row >= 3);
      set(LossName::Cuni, row >= 3);
      set(LossName::Orth, row >= 4);
      set(LossName::Uni, row >= 4);
      set(LossName::Recon, row >= 5);
      return c;
    }
  }
  throw Error(ErrorKind::ConfigError, "field 'preset': unknown preset '" + std::string(name) + "'");
}

RunConfig parse_config(std::string_view text) {
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, trim(line), "expected 'key = value'");
    Entry e{line_no, std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1)))};
    if (e.key.empty()) fail(line_no, "", "missing key");
    if (e.value.empty()) fail(line_no, e.key, "missing value");
    if (!seen.insert(e.key).second) fail(line_no, e.key, "duplicate key");
    if (e.key != "preset" && !setters().contains(e.key)) fail(line_no, e.key, "unknown key");
    entries.push_back(std::move(e));
  }

  RunConfig out;
  for (const auto& e : entries)
    if (e.key == "preset") {
      try {
        out.train = preset_config(e.value);
      } catch (const Error&) {
        fail(e.line, e.key, "unknown preset '" + e.value + "'");
      }
      out.preset = e.value;
    }
  for (const auto& e : entries)
    if (e.key != "preset") setters().at(e.key)(out, e);
  try {
    validate(out.train);
  } catch (const Error& err) {
    std::string what = err.what();
    if (err.kind() == ErrorKind::ConfigError) what = what.substr(what.find(": ") + 2);
    throw Error(ErrorKind::ConfigError, "invalid configuration: " + what);
  }
  return out;
}

void require_seed(const RunConfig& config) {
  if (!config.seed_set) fail(0, "seed", "missing required field (set it in the config or pass --seed)");
}

}  // namespace msvq
