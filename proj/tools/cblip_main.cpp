/*
 * Copyright 2026 The CBLiP Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// cblip: preprocess, train, eval and synth commands.
//
// Exit codes: 0 ok, 1 usage error, 2 data or runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cblip/cblip.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace cblip {
namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json stats_json(const KnowledgeGraph& g) {
  const GraphStats s = graph_stats(g);
  return json{{"entities", s.num_entities},
              {"relations", s.num_relations},
              {"triples", s.num_triples},
              {"mean_degree", s.mean_degree}};
}

json report_json(const RankingReport& r) {
  return json{{"queries", r.ranks.size()},
              {"mrr", r.mrr},
              {"hits1", r.hits(1)},
              {"hits3", r.hits(3)},
              {"hits10", r.hits(10)}};
}

bool is_transductive_dir(const fs::path& dir) {
  return fs::exists(dir / "train.txt") && fs::exists(dir / "valid.txt") &&
         fs::exists(dir / "test.txt");
}

// ---------------------------------------------------------------- preprocess

int cmd_preprocess(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("no such dataset directory: " + dir.string());
  json out;
  if (const auto split = locate_inductive_split(dir)) {
    const InductiveDataset ds = load_inductive_split(split->first, split->second);
    out["layout"] = "inductive";
    out["train_dir"] = split->first.string();
    out["test_dir"] = split->second.string();
    out["train"] = stats_json(ds.train_graph);
    out["valid_triples"] = ds.valid_triples.size();
    out["test"] = stats_json(ds.test_graph);
    out["inference_triples"] = ds.infer_triples.size();
  } else if (is_transductive_dir(dir)) {
    const TransductiveDataset ds = load_transductive_split(dir);
    out["layout"] = "transductive";
    out["train"] = stats_json(ds.graph);
    out["valid_triples"] = ds.valid_triples.size();
    out["test_triples"] = ds.test_triples.size();
  } else {
    throw DatasetError(dir.string() +
                       ": expected train/ and test/ subdirectories, a <name>_ind sibling, or "
                       "train.txt, valid.txt and test.txt");
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- datasets

std::pair<fs::path, fs::path> inductive_dirs(const RunConfig& rc) {
  if (!rc.get("train_dir").empty() || !rc.get("test_dir").empty()) {
    if (rc.get("train_dir").empty() || rc.get("test_dir").empty()) {
      throw ConfigError("train_dir and test_dir must be given together");
    }
    return {rc.get("train_dir"), rc.get("test_dir")};
  }
  if (rc.get("dataset_dir").empty()) throw ConfigError("no dataset: set dataset_dir");
  const auto split = locate_inductive_split(rc.get("dataset_dir"));
  if (!split) {
    throw DatasetError(rc.get("dataset_dir") + ": no inductive split (train/ and test/, or _ind sibling)");
  }
  return *split;
}

fs::path transductive_dir(const RunConfig& rc) {
  if (rc.get("dataset_dir").empty()) throw ConfigError("no dataset: set dataset_dir");
  return rc.get("dataset_dir");
}

// ---------------------------------------------------------------- train

template <typename T>
int train_with(const RunConfig& rc) {
  const TrainConfig cfg = rc.train_config();
  const fs::path out_dir = rc.get("out_dir");
  fs::create_directories(out_dir);
  std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics) throw DatasetError("cannot write " + (out_dir / "metrics.jsonl").string());
  const MetricsSink sink = [&](const MetricsRecord& r) {
    metrics << r.to_json().dump() << "\n";
    metrics.flush();
    std::cerr << "epoch " << r.epoch << " loss " << r.loss.value_or(0.0) << " valid mrr " << r.mrr
              << "\n";
  };
  Rng init = make_stream(cfg.seed, "init");
  json summary;
  if (cfg.mode == TaskMode::kInductive) {
    const auto [train_dir, test_dir] = inductive_dirs(rc);
    const InductiveDataset ds = load_inductive_split(train_dir, test_dir);
    CblipModel<T> model(cfg.model_config(ds.train_graph.num_relations()), init);
    const auto result = train_inductive(model, ds, cfg, sink);
    save_checkpoint(make_checkpoint(model.params(), rc.values(),
                                    ds.train_graph.relations().names()),
                    out_dir / "model.ckpt");
    summary["best_epoch"] = result.best_epoch;
    summary["best_valid_mrr"] = result.best_valid_mrr;
    summary["epochs_run"] = result.epochs_run;
  } else {
    const TransductiveDataset ds = load_transductive_split(transductive_dir(rc));
    CblipModel<T> model(
        cfg.model_config(ds.graph.num_relations(), ds.graph.num_entities()), init);
    const auto result = train_transductive(model, ds, cfg, sink);
    save_checkpoint(make_checkpoint(model.params(), rc.values(), ds.graph.relations().names(),
                                    ds.graph.entities().names()),
                    out_dir / "model.ckpt");
    summary["best_epoch"] = result.best_epoch;
    summary["best_valid_mrr"] = result.best_valid_mrr;
    summary["epochs_run"] = result.epochs_run;
  }
  summary["checkpoint"] = (out_dir / "model.ckpt").string();
  summary["metrics"] = (out_dir / "metrics.jsonl").string();
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// `--key value` pairs left over after CLI11 parsing become config overrides.
void apply_overrides(RunConfig& rc, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& flag = extras[i];
    if (flag.rfind("--", 0) != 0 || flag.size() < 3) {
      throw UsageError("unexpected argument '" + flag + "'");
    }
    std::string key = flag.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("flag " + flag + " needs a value");
      value = extras[++i];
    }
    rc.set(key, value);
  }
}

int cmd_train(const fs::path& config, const std::vector<std::string>& extras) {
  RunConfig rc = RunConfig::from_file(config);
  apply_overrides(rc, extras);
  rc.train_config();  // validate before touching data
  return rc.use_f64() ? train_with<double>(rc) : train_with<float>(rc);
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> eval_negatives;
  std::optional<std::string> eval_filter;
  std::string split = "test";
};

void require_same(const std::vector<std::string>& ckpt, const std::vector<std::string>& data,
                  const std::string& what) {
  if (ckpt != data) {
    throw CheckpointError(what + " vocabulary of the dataset (" + std::to_string(data.size()) +
                          ") does not match the checkpoint (" + std::to_string(ckpt.size()) + ")");
  }
}

template <typename T>
int eval_with(const Checkpoint& ck, const RunConfig& rc, const fs::path& dir,
              const std::string& split) {
  const TrainConfig cfg = rc.train_config();
  Rng init = make_stream(0, "init");
  json out;
  if (cfg.mode == TaskMode::kInductive) {
    const auto located = locate_inductive_split(dir);
    if (!located) throw DatasetError(dir.string() + ": no inductive split found");
    const InductiveDataset ds = load_inductive_split(located->first, located->second);
    require_same(ck.relations, ds.train_graph.relations().names(), "relation");
    CblipModel<T> model(cfg.model_config(ds.train_graph.num_relations()), init);
    load_parameters(ck, model.params());
    const bool valid = split == "valid";
    const KnowledgeGraph& facts = valid ? ds.train_graph : ds.test_graph;
    const std::vector<Triple>& queries = valid ? ds.valid_triples : ds.infer_triples;
    Rng eval_rng = make_stream(cfg.seed, "eval");
    const auto r = evaluate_inductive(model, facts, queries, known_triples(facts, queries), cfg,
                                      eval_rng);
    out = report_json(r.pooled);
    out["head"] = report_json(r.head_side);
    out["tail"] = report_json(r.tail_side);
    out["short_queries"] = r.short_queries;
    out["missing_negatives"] = r.missing_negatives;
  } else {
    const TransductiveDataset ds = load_transductive_split(dir);
    require_same(ck.relations, ds.graph.relations().names(), "relation");
    require_same(ck.entities, ds.graph.entities().names(), "entity");
    CblipModel<T> model(cfg.model_config(ds.graph.num_relations(), ds.graph.num_entities()),
                        init);
    load_parameters(ck, model.params());
    const auto& queries = split == "valid" ? ds.valid_triples : ds.test_triples;
    out = report_json(evaluate_transductive(model, ds.graph, queries, cfg));
  }
  out["split"] = split;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& dir, const EvalFlags& flags) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig rc;
  try {
    rc = RunConfig::from_map(ck.config);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config echo: ") + e.what());
  }
  if (flags.seed) rc.set("seed", std::to_string(*flags.seed));
  if (flags.eval_negatives) rc.set("eval_negatives", std::to_string(*flags.eval_negatives));
  if (flags.eval_filter) rc.set("eval_filter", *flags.eval_filter);
  return rc.use_f64() ? eval_with<double>(ck, rc, dir, flags.split)
                      : eval_with<float>(ck, rc, dir, flags.split);
}

// ---------------------------------------------------------------- synth

int cmd_synth(const std::string& kind, const fs::path& dir, std::uint64_t seed) {
  if (kind == "composition") {
    CompositionKgOptions opts;
    opts.seed = seed;
    make_composition_kg(opts).write(dir);
  } else if (kind == "typed-pairs") {
    TypedPairKgOptions opts;
    opts.seed = seed;
    make_typed_pair_kg(opts).write(dir);
  } else {
    throw UsageError("unknown synthetic dataset '" + kind + "' (composition|typed-pairs)");
  }
  std::cout << dir.string() << "\n";
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"CBLiP knowledge-graph completion"};
  app.require_subcommand(1);

  std::string pre_dir;
  auto* pre = app.add_subcommand("preprocess", "Load a dataset and print split statistics");
  pre->add_option("dataset_dir", pre_dir)->required();

  std::string train_cfg;
  auto* train = app.add_subcommand("train", "Train a model; extra --key value pairs override the config");
  train->add_option("config", train_cfg, "key = value config file")->required();
  train->allow_extras();

  std::string ckpt, eval_dir;
  EvalFlags flags;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("checkpoint", ckpt)->required();
  eval->add_option("dataset_dir", eval_dir)->required();
  eval->add_option("--seed", flags.seed, "seed of the negative draws");
  eval->add_option("--eval_negatives", flags.eval_negatives, "corruptions per side");
  eval->add_option("--eval_filter", flags.eval_filter, "on|off")
      ->check(CLI::IsMember({"on", "off"}));
  eval->add_option("--split", flags.split, "valid|test")->check(CLI::IsMember({"valid", "test"}));

  std::string synth_kind, synth_dir;
  std::uint64_t synth_seed = 7;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("kind", synth_kind, "composition|typed-pairs")->required();
  synth->add_option("out_dir", synth_dir)->required();
  synth->add_option("--seed", synth_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*pre) return cmd_preprocess(pre_dir);
    if (*train) return cmd_train(train_cfg, train->remaining());
    if (*eval) return cmd_eval(ckpt, eval_dir, flags);
    if (*synth) return cmd_synth(synth_kind, synth_dir, synth_seed);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace
}  // namespace cblip

int main(int argc, char** argv) { return cblip::run(argc, argv); }
