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

// msvq command-line tool: train, eval, gradcheck, quantize, synth.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "msvq/binary_io.hpp"
#include "msvq/config.hpp"
#include "msvq/embedding_dump.hpp"
#include "msvq/error.hpp"
#include "msvq/losses.hpp"
#include "msvq/trainer.hpp"

namespace fs = std::filesystem;
using namespace msvq;

namespace {

enum Exit : int { Ok = 0, Failure = 1, BadConfig = 2, IoFailure = 3, Corrupt = 4, GradFailure = 5 };

enum class Level { Quiet, Info, Debug };

Level log_level() {
  const char* env = std::getenv("CODEBIND_LOG");
  if (!env) return Level::Info;
  std::string v = env;
  if (v == "quiet") return Level::Quiet;
  if (v == "debug") return Level::Debug;
  if (v != "info") std::cerr << "warning: CODEBIND_LOG='" << v << "' not recognized, using info\n";
  return Level::Info;
}

const Level g_level = log_level();

void log(Level at, const std::string& msg) {
  if (g_level >= at) std::cerr << msg << '\n';
}

int exit_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::ConfigError:
    case ErrorKind::DimMismatch:
    case ErrorKind::InvalidSpec: return BadConfig;
    case ErrorKind::Io: return IoFailure;
    case ErrorKind::CorruptContainer: return Corrupt;
    default: return Failure;
  }
}

std::string read_text(const std::string& path) {
  auto bytes = io::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

// File config (or the desk preset when none is given), seed override, seed requirement.
RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  RunConfig rc;
  if (!path.empty()) {
    std::string text;
    try {
      text = read_text(path);
    } catch (const Error&) {
      throw Error(ErrorKind::ConfigError, "cannot read config file " + path);
    }
    rc = parse_config(text);
  }
  if (seed) {
    rc.train.seed = *seed;
    rc.seed_set = true;
  }
  require_seed(rc);
  rc.train.data.seed = rc.train.seed;
  return rc;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::Io, "cannot create output directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

EmbeddingDump dump_embeddings(const Model& model, const Dataset& data) {
  const AlignmentPath& path = model.paths.front();
  EmbeddingDump dump;
  dump.dim = static_cast<std::uint32_t>(model.embed_dim());
  dump.codes_per_vector = static_cast<std::uint32_t>(model.slots);
  const auto labels = data.concepts();
  std::vector<std::size_t> members(path.bridges.begin(), path.bridges.end());
  members.push_back(path.target);
  std::sort(members.begin(), members.end());
  for (std::size_t m : members) {
    ModalityEmbeddings e = embed(model, path, m, data.observations(m));
    for (std::size_t i = 0; i < e.shared_raw.rows; ++i) {
      EmbeddingRecord rec;
      rec.label = labels[i];
      rec.modality = static_cast<std::uint8_t>(m);
      rec.shared = e.shared_raw.row_vec(i);
      rec.shared_codes = e.shared_codes[i];
      if (e.specific_raw) {
        rec.specific = e.specific_raw->row_vec(i);
        rec.specific_codes = e.specific_codes[i];
      }
      dump.records.push_back(std::move(rec));
    }
  }
  return dump;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out) {
  RunConfig rc = load_config(config_path, seed);
  ensure_dir(out);
  log(Level::Info, "training preset=" + rc.preset + " seed=" + std::to_string(rc.train.seed) +
                       " steps=" + std::to_string(rc.train.steps));

  TrainResult result = train(rc.train, [](const MetricsRow& row) {
    const Level at = row.eval ? Level::Info : Level::Debug;
    if (g_level < at) return;
    std::ostringstream msg;
    msg << "step " << row.step << " align " << row.values[loss_index(LossName::Align)];
    if (row.eval)
      msg << " r1(target->text) " << row.eval->retrieval.target_to_text.r1 << " zero-shot " << row.eval->zero_shot;
    log(at, msg.str());
  });

  const Model& model = result.model;
  const AlignmentPath& path = model.paths.front();
  io::write_file_atomic(join(out, "model.ckpt"), model.save());
  io::write_file_atomic(join(out, "shared.cbqz"), path.codebooks.shared.save());
  for (const auto& [m, q] : path.codebooks.specific)
    io::write_file_atomic(join(out, "spec_" + model.modalities[m].name + ".cbqz"), q.save());
  io::write_text_atomic(join(out, "metrics.csv"), metrics_csv(result));

  TrainConfig cfg = rc.train;
  cfg.data.seed = cfg.seed;
  const Dataset eval_set = generate(make_world(cfg.data), Split::Eval);
  io::write_file_atomic(join(out, "embeddings.cbem"), dump_embeddings(model, eval_set).save());
  log(Level::Info, "wrote " + out);
  return Ok;
}

void check_compatible(const Model& model, const SyntheticSpec& spec) {
  if (model.modalities.size() != spec.modalities.size())
    throw Error(ErrorKind::DimMismatch, "checkpoint modality count differs from the configured dataset");
  for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
    const auto& a = model.modalities[m];
    const auto& b = spec.modalities[m];
    if (a.obs_dim != b.obs_dim || a.has_specific != b.has_specific)
      throw Error(ErrorKind::DimMismatch, "checkpoint modality '" + a.name + "' does not match the dataset");
  }
}

std::string eval_csv(const EvalReport& r) {
  std::vector<std::pair<std::string, double>> extra = {
      {"probe_shared_concept", r.probe_shared_concept}, {"probe_specific_concept", r.probe_specific_concept},
      {"probe_shared_attr", r.probe_shared_attr},       {"probe_specific_attr", r.probe_specific_attr},
      {"intra_shared", r.similarity.intra_shared},      {"intra_specific", r.similarity.intra_specific},
      {"inter", r.similarity.inter},                    {"fine_shared", r.concat_shared},
      {"fine_specific", r.concat_specific},             {"fine_concat", r.concat_both},
  };
  for (const auto& [name, u] : r.usage) {
    extra.emplace_back("usage_" + name, u.usage_rate);
    extra.emplace_back("ppl_" + name, u.perplexity);
  }
  std::string header = "r1_target_text,r10_target_text,r1_text_target,r10_text_target,"
                       "r1_target_bridge,r10_target_bridge,r1_bridge_target,r10_bridge_target,zero_shot";
  std::string row = snapshot_fields(r.snapshot);
  for (const auto& [name, v] : extra) {
    header += "," + name;
    row += "," + format_number(v);
  }
  return header + "\n" + row + "\n";
}

void print_report(const EvalReport& r) {
  const auto& rt = r.snapshot.retrieval;
  auto pair = [](const char* name, const RecallPair& p) {
    std::printf("retrieval.%s: r1=%.6f r10=%.6f\n", name, p.r1, p.r10);
  };
  pair("target_to_text", rt.target_to_text);
  pair("text_to_target", rt.text_to_target);
  pair("target_to_bridge", rt.target_to_bridge);
  pair("bridge_to_target", rt.bridge_to_target);
  std::printf("zero_shot: %.6f\n", r.snapshot.zero_shot);
  std::printf("probe.concept: shared=%.6f specific=%.6f\n", r.probe_shared_concept, r.probe_specific_concept);
  std::printf("probe.attribute: shared=%.6f specific=%.6f\n", r.probe_shared_attr, r.probe_specific_attr);
  std::printf("similarity: intra_shared=%.6f intra_specific=%.6f inter=%.6f\n", r.similarity.intra_shared,
              r.similarity.intra_specific, r.similarity.inter);
  std::printf("fine_grained_r10: shared=%.6f specific=%.6f concat=%.6f\n", r.concat_shared, r.concat_specific,
              r.concat_both);
  for (const auto& [name, u] : r.usage)
    std::printf("codebook.%s: usage=%.6f perplexity=%.6f\n", name.c_str(), u.usage_rate, u.perplexity);
}

int cmd_eval(const std::string& ckpt, const std::string& config_path, std::optional<std::uint64_t> seed,
             const std::string& out) {
  RunConfig rc = load_config(config_path, seed);
  Model model = Model::load(io::read_file(ckpt));
  check_compatible(model, rc.train.data);
  const Dataset data = generate(make_world(rc.train.data), Split::Eval);
  EvalReport report = evaluate(model, data, rc.train.seed);
  print_report(report);
  if (!out.empty()) {
    ensure_dir(out);
    io::write_text_atomic(join(out, "eval.csv"), eval_csv(report));
  }
  return Ok;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& corrupt) {
  std::optional<LossName> broken;
  if (!corrupt.empty()) {
    broken = parse_loss_name(corrupt);
    if (!broken) throw Error(ErrorKind::ConfigError, "field '--corrupt-term': unknown loss '" + corrupt + "'");
  }
  auto results = gradcheck_suite(seed, 10, broken);
  std::string failing;
  for (const auto& r : results) {
    std::printf("%-6s max_rel_error=%.3e tolerance=%.0e%s %s\n", std::string(loss_name(r.name)).c_str(),
                r.max_rel_error, r.tolerance, r.name == LossName::Vq ? (r.stop_grad_ok ? " stop_grad=ok" : " stop_grad=VIOLATED") : "",
                r.passed() ? "ok" : "FAIL");
    if (!r.passed()) failing += (failing.empty() ? "" : ", ") + std::string(loss_name(r.name));
  }
  if (!failing.empty()) {
    std::cerr << "gradcheck failed: " << failing << '\n';
    return GradFailure;
  }
  return Ok;
}

// Modality id to quantizer path, given as ID=PATH.
std::map<std::uint8_t, std::string> parse_specific(const std::vector<std::string>& args) {
  std::map<std::uint8_t, std::string> out;
  for (const auto& a : args) {
    auto eq = a.find('=');
    unsigned long id = 256;
    if (eq != std::string::npos) {
      try {
        id = std::stoul(a.substr(0, eq));
      } catch (const std::exception&) {
      }
    }
    if (id > 255 || eq + 1 >= a.size())
      throw Error(ErrorKind::ConfigError, "field '--specific-quantizer': expected MODALITY_ID=PATH, got '" + a + "'");
    out[static_cast<std::uint8_t>(id)] = a.substr(eq + 1);
  }
  return out;
}

int cmd_quantize(const std::string& shared_path, const std::vector<std::string>& specific_args,
                 const std::string& in, const std::string& out, bool shared_only) {
  auto spec_paths = parse_specific(specific_args);
  const auto shared = CompositionalQuantizer::load(io::read_file(shared_path));
  std::map<std::uint8_t, CompositionalQuantizer> specific;
  for (const auto& [id, p] : spec_paths) specific.emplace(id, CompositionalQuantizer::load(io::read_file(p)));
  const EmbeddingDump input = EmbeddingDump::load(io::read_file(in));

  auto check = [&](const CompositionalQuantizer& q, const char* what) {
    if (q.dim() != input.dim || q.slots() != shared.slots())
      throw Error(ErrorKind::DimMismatch, std::string(what) + " quantizer width " + std::to_string(q.dim()) +
                                              " differs from the dump width " + std::to_string(input.dim));
  };
  check(shared, "shared");
  for (const auto& [id, q] : specific) check(q, "specific");

  EmbeddingDump output;
  output.dim = input.dim;
  output.codes_per_vector = static_cast<std::uint32_t>(shared.slots());
  output.records.reserve(input.records.size());
  for (const auto& rec : input.records) {
    EmbeddingRecord o;
    o.label = rec.label;
    o.modality = rec.modality;
    QuantizeResult s = shared.quantize(rec.shared);
    o.shared = s.quantized;
    o.shared_codes = s.codes;
    if (rec.specific && !shared_only) {
      auto it = specific.find(rec.modality);
      if (it == specific.end())
        throw Error(ErrorKind::ConfigError, "no specific quantizer given for modality " +
                                                std::to_string(rec.modality) + " (use --shared-only to drop it)");
      QuantizeResult q = it->second.quantize(*rec.specific);
      o.specific = q.quantized;
      o.specific_codes = q.codes;
    }
    output.records.push_back(std::move(o));
  }
  io::write_file_atomic(out, output.save());
  log(Level::Info, "quantized " + std::to_string(output.records.size()) + " records");
  return Ok;
}

int cmd_synth(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out,
              const std::string& split_name) {
  RunConfig rc = load_config(config_path, seed);
  Split split;
  if (split_name == "train") split = Split::Train;
  else if (split_name == "eval") split = Split::Eval;
  else throw Error(ErrorKind::ConfigError, "field '--split': expected train or eval, got '" + split_name + "'");
  ensure_dir(out);
  const Dataset data = generate(make_world(rc.train.data), split);
  const auto& mods = rc.train.data.modalities;
  for (std::size_t m = 0; m < mods.size(); ++m) {
    std::string csv = "concept";
    for (std::size_t k = 0; k < rc.train.data.shared_dim; ++k) csv += ",s" + std::to_string(k);
    if (mods[m].has_specific)
      for (std::size_t k = 0; k < rc.train.data.spec_dim; ++k) csv += ",u" + std::to_string(k);
    for (std::size_t k = 0; k < mods[m].obs_dim; ++k) csv += ",x" + std::to_string(k);
    csv += '\n';
    for (const auto& s : data.samples) {
      csv += std::to_string(s.label);
      for (double v : s.shared) csv += "," + format_number(v);
      for (double v : s.specific[m]) csv += "," + format_number(v);
      for (double v : s.obs[m]) csv += "," + format_number(v);
      csv += '\n';
    }
    io::write_text_atomic(join(out, split_name + "_" + mods[m].name + ".csv"), csv);
  }
  log(Level::Info, "wrote " + std::to_string(data.size()) + " samples per modality to " + out);
  return Ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msvq: modality-shared-specific compositional vector quantization"};
  app.require_subcommand(1);

  std::string config_path, out, ckpt, corrupt, quantizer, in, split = "train";
  std::optional<std::uint64_t> seed;
  std::uint64_t grad_seed = 1;
  std::vector<std::string> specific;
  bool shared_only = false;

  auto* train_cmd = app.add_subcommand("train", "train on the synthetic suite");
  train_cmd->add_option("--config", config_path, "config file")->required();
  train_cmd->add_option("--seed", seed, "seed override");
  train_cmd->add_option("--out", out, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the regenerated eval split");
  eval_cmd->add_option("checkpoint", ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--config", config_path, "config file (defaults to the desk preset)");
  eval_cmd->add_option("--seed", seed, "dataset seed");
  eval_cmd->add_option("--out", out, "directory for eval.csv");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every loss gradient");
  grad_cmd->add_option("--seed", grad_seed, "suite seed");
  grad_cmd->add_option("--corrupt-term", corrupt)->group("");  // test hook

  auto* quant_cmd = app.add_subcommand("quantize", "quantize an embedding dump");
  quant_cmd->add_option("--quantizer", quantizer, "shared quantizer (.cbqz)")->required();
  quant_cmd->add_option("--specific-quantizer", specific, "MODALITY_ID=PATH, repeatable");
  quant_cmd->add_option("--in", in, "input dump (.cbem)")->required();
  quant_cmd->add_option("--out", out, "output dump")->required();
  quant_cmd->add_flag("--shared-only", shared_only, "drop specific vectors");

  auto* synth_cmd = app.add_subcommand("synth", "write the synthetic dataset as CSV");
  synth_cmd->add_option("--config", config_path, "config file (defaults to the desk preset)");
  synth_cmd->add_option("--seed", seed, "seed override");
  synth_cmd->add_option("--out", out, "output directory")->required();
  synth_cmd->add_option("--split", split, "train or eval");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? Ok : BadConfig;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, seed, out);
    if (*eval_cmd) return cmd_eval(ckpt, config_path, seed, out);
    if (*grad_cmd) return cmd_gradcheck(grad_seed, corrupt);
    if (*quant_cmd) return cmd_quantize(quantizer, specific, in, out, shared_only);
    if (*synth_cmd) return cmd_synth(config_path, seed, out, split);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Failure;
  }
  return Failure;
}
