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

#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cblip/context.hpp"
#include "cblip/errors.hpp"
#include "cblip/eval.hpp"
#include "cblip/kg_store.hpp"
#include "cblip/model.hpp"
#include "cblip/numerics/adam.hpp"
#include "cblip/numerics/ops.hpp"
#include "cblip/rng.hpp"

namespace cblip {

enum class NeighborSampling { kOrdered, kSeeded };

struct TrainConfig {
  TaskMode mode = TaskMode::kInductive;
  std::size_t k = 2;
  std::size_t m = 20;
  std::size_t d = 32;
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t d_ff = 64;
  Aggregation agg = Aggregation::kConcat;
  MergeMode merge_mode = MergeMode::kUnion;
  double gamma = 1.0;
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  std::size_t eval_negatives = 50;
  AttnScale attn_scale = AttnScale::kDim;
  NeighborSampling neighbor_sampling = NeighborSampling::kOrdered;
  bool connection_bias = true;
  double dropout = 0.0;
  std::size_t patience = 20;
  std::size_t neg_multiplier = 1;
  bool eval_filter = true;
  /// Cap on validation queries per epoch; 0 evaluates all of them.
  std::size_t valid_queries = 0;
  /// Record wall-clock seconds in the metrics stream (otherwise 0).
  bool wall_timing = true;

  void validate() const {
    const auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(k, "k");
    positive(d, "d");
    positive(d_model, "d_model");
    positive(heads, "heads");
    positive(layers, "layers");
    positive(d_ff, "d_ff");
    positive(epochs, "epochs");
    positive(batch_size, "batch_size");
    positive(eval_negatives, "eval_negatives");
    positive(neg_multiplier, "neg_multiplier");
    if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
    if (mode == TaskMode::kInductive && !(gamma > 0.0)) throw ConfigError("gamma must be > 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  }

  ContextOptions context_options(Rng* sampler = nullptr) const {
    return ContextOptions{k, m, merge_mode,
                          neighbor_sampling == NeighborSampling::kSeeded ? sampler : nullptr};
  }

  ModelConfig model_config(std::size_t num_relations, std::size_t num_entities = 0) const {
    ModelConfig mc;
    mc.mode = mode;
    mc.num_relations = num_relations;
    mc.num_entities = mode == TaskMode::kTransductive ? num_entities : 0;
    mc.d = d;
    mc.agg = agg;
    mc.encoder = EncoderConfig{d_model, heads, layers, d_ff, attn_scale, connection_bias, dropout};
    return mc;
  }
};

/// Replaces head (p = 1/2) or tail with a different uniformly drawn entity
/// from `pool`. Not filtered against known triples.
inline Triple sample_negative(const Triple& p, std::span<const EntityId> pool, Rng& rng) {
  if (pool.size() < 2) throw ContractError("sample_negative: pool needs at least 2 entities");
  const bool corrupt_head = (rng() >> 63) != 0;
  Triple n = p;
  EntityId& slot = corrupt_head ? n.head : n.tail;
  const EntityId original = slot;
  // Rejection keeps the draw uniform over pool entries other than `original`.
  do {
    slot = pool[uniform_index(rng, pool.size())];
  } while (slot == original);
  return n;
}

/// Σ_i max(0, neg_i - pos_i + gamma) over 1×1 scores.
template <typename T>
Var<T> margin_loss(const std::vector<Var<T>>& pos, const std::vector<Var<T>>& neg, T gamma) {
  if (pos.size() != neg.size() || pos.empty()) {
    throw ContractError("margin_loss: need equally many positive and negative scores");
  }
  std::optional<Var<T>> total;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const Var<T> term = relu(add_scalar(add(neg[i], scale(pos[i], T{-1})), gamma));
    total = total ? add(*total, term) : term;
  }
  return *total;
}

inline double margin_loss(std::span<const double> pos, std::span<const double> neg,
                          double gamma) {
  if (pos.size() != neg.size()) throw ContractError("margin_loss: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) total += std::max(0.0, neg[i] - pos[i] + gamma);
  return total;
}

/// Mean over queries of -log softmax(logits)[true_rel].
template <typename T>
Var<T> cross_entropy_loss(const std::vector<Var<T>>& logits, std::span<const std::size_t> truth) {
  if (logits.size() != truth.size() || logits.empty()) {
    throw ContractError("cross_entropy_loss: need one label per logit row");
  }
  std::optional<Var<T>> total;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (truth[i] >= logits[i].cols()) {
      throw ContractError("cross_entropy_loss: relation id " + std::to_string(truth[i]) +
                          " out of range");
    }
    const Var<T> picked = slice_cols(row_log_softmax(logits[i]), truth[i], truth[i] + 1);
    total = total ? add(*total, picked) : picked;
  }
  return scale(*total, T{-1} / static_cast<T>(logits.size()));
}

struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;
  std::optional<double> loss;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  double seconds = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["split"] = split;
    j["loss"] = loss ? nlohmann::ordered_json(*loss) : nlohmann::ordered_json(nullptr);
    j["mrr"] = mrr;
    j["hits1"] = hits1;
    j["hits3"] = hits3;
    j["hits10"] = hits10;
    j["seconds"] = seconds;
    return j;
  }

  static MetricsRecord from_report(std::size_t epoch, std::string split,
                                   std::optional<double> loss, const RankingReport& r,
                                   double seconds) {
    return MetricsRecord{epoch, std::move(split), loss, r.mrr, r.hits(1), r.hits(3), r.hits(10),
                         seconds};
  }
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

template <typename T>
struct TrainResult {
  std::vector<MetricsRecord> metrics;
  std::size_t best_epoch = 0;
  double best_valid_mrr = -1.0;
  std::size_t epochs_run = 0;
};

inline TripleSet known_triples(const KnowledgeGraph& g, std::span<const Triple> extra = {}) {
  TripleSet known(g.triples().begin(), g.triples().end());
  known.insert(extra.begin(), extra.end());
  return known;
}

/// Entity prediction with the model as scorer. Contexts come from `facts`.
template <typename T>
EntityPredictionReport evaluate_inductive(const CblipModel<T>& model, const KnowledgeGraph& facts,
                                          std::span<const Triple> queries, const TripleSet& known,
                                          const TrainConfig& cfg, Rng& rng) {
  const ContextOptions opts = cfg.context_options();
  return evaluate_entity_prediction(
      [&](const Triple& c) { return model.score_inductive(facts, c, opts); }, facts, queries,
      known, EntityEvalOptions{cfg.eval_negatives, cfg.eval_filter}, rng);
}

template <typename T>
RankingReport evaluate_transductive(const CblipModel<T>& model, const KnowledgeGraph& graph,
                                    std::span<const Triple> queries, const TrainConfig& cfg) {
  const ContextOptions opts = cfg.context_options();
  return evaluate_relation_prediction(
      [&](const Triple& q) {
        return model.relation_logits_transductive(graph, q.head, q.tail, q, opts);
      },
      queries);
}

namespace detail {

template <typename T>
std::vector<Tensor<T>> snapshot(const ParameterStore<T>& store) {
  std::vector<Tensor<T>> out;
  for (const auto& p : store) out.push_back(p.value);
  return out;
}

template <typename T>
void restore(ParameterStore<T>& store, const std::vector<Tensor<T>>& values) {
  std::size_t i = 0;
  for (auto& p : store) p.value = values.at(i++);
}

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

inline std::span<const Triple> capped(std::span<const Triple> v, std::size_t cap) {
  return cap == 0 || cap >= v.size() ? v : v.first(cap);
}

// Shared epoch loop: shuffles, batches, steps Adam, validates, keeps the
// best parameters and stops after `patience` epochs without improvement.
template <typename T, typename BatchLoss, typename Validate>
TrainResult<T> run_epochs(CblipModel<T>& model, std::size_t num_examples, const TrainConfig& cfg,
                          const MetricsSink& sink, BatchLoss&& batch_loss, Validate&& validate) {
  if (num_examples == 0) throw ConfigError("training set is empty");
  TrainResult<T> result;
  Rng shuffle_rng = make_stream(cfg.seed, "shuffle");
  AdamState<T> adam(model.params(), AdamOptions{cfg.lr, 0.9, 0.999, 1e-8});
  std::vector<std::size_t> order(num_examples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor<T>> best = snapshot(model.params());
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Stopwatch clock(cfg.wall_timing);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    }
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      model.params().zero_grad();
      loss_sum += batch_loss(std::span<const std::size_t>(order).subspan(b, e - b));
      adam_step(model.params(), adam);
    }
    const double mean_loss = loss_sum / static_cast<double>(num_examples);
    const RankingReport valid = validate();
    const MetricsRecord rec =
        MetricsRecord::from_report(epoch, "valid", mean_loss, valid, clock.seconds());
    result.metrics.push_back(rec);
    if (sink) sink(rec);
    result.epochs_run = epoch;
    if (valid.mrr > result.best_valid_mrr) {
      result.best_valid_mrr = valid.mrr;
      result.best_epoch = epoch;
      best = snapshot(model.params());
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore(model.params(), best);
  return result;
}

}  // namespace detail

/// Margin-ranking training on the train graph; validation MRR on the
/// validation triples. On return the model holds the best-validation weights.
template <typename T>
TrainResult<T> train_inductive(CblipModel<T>& model, const InductiveDataset& ds,
                               const TrainConfig& cfg, const MetricsSink& sink = {}) {
  cfg.validate();
  if (model.config().mode != TaskMode::kInductive) {
    throw ConfigError("train_inductive: model is not inductive");
  }
  const KnowledgeGraph& g = ds.train_graph;
  std::vector<EntityId> pool(g.num_entities());
  std::iota(pool.begin(), pool.end(), EntityId{0});
  Rng neg_rng = make_stream(cfg.seed, "sampling");
  Rng ctx_rng = make_stream(cfg.seed, "neighbors");
  Rng drop_rng = make_stream(cfg.seed, "dropout");
  Rng* dropout = cfg.dropout > 0.0 ? &drop_rng : nullptr;
  const TripleSet known = known_triples(g, ds.valid_triples);
  const auto queries = detail::capped(ds.valid_triples, cfg.valid_queries);
  const T gamma = static_cast<T>(cfg.gamma);

  auto batch_loss = [&](std::span<const std::size_t> batch) {
    double total = 0.0;
    const ContextOptions opts = cfg.context_options(&ctx_rng);
    for (std::size_t idx : batch) {
      const Triple& p = g.triple(idx);
      for (std::size_t rep = 0; rep < cfg.neg_multiplier; ++rep) {
        const Triple n = sample_negative(p, pool, neg_rng);
        Tape<T> tape;
        const Var<T> sp = model.score(
            tape, model.build_sequence_inductive(extract_context(g, p, opts)), dropout);
        const Var<T> sn = model.score(
            tape, model.build_sequence_inductive(extract_context(g, n.head, n.tail, p, n.rel, opts)),
            dropout);
        const Var<T> loss = margin_loss<T>({sp}, {sn}, gamma);
        total += static_cast<double>(loss.value()[0]);
        if (loss.value()[0] > T{0}) tape.backward(loss);
      }
    }
    return total;
  };
  auto validate = [&]() {
    Rng eval_rng = make_stream(cfg.seed, "eval");
    return evaluate_inductive(model, g, queries, known, cfg, eval_rng).pooled;
  };
  return detail::run_epochs(model, g.num_triples(), cfg, sink, batch_loss, validate);
}

/// Cross-entropy relation classification; validation relation MRR.
template <typename T>
TrainResult<T> train_transductive(CblipModel<T>& model, const TransductiveDataset& ds,
                                  const TrainConfig& cfg, const MetricsSink& sink = {}) {
  cfg.validate();
  if (model.config().mode != TaskMode::kTransductive) {
    throw ConfigError("train_transductive: model is not transductive");
  }
  const KnowledgeGraph& g = ds.graph;
  Rng ctx_rng = make_stream(cfg.seed, "neighbors");
  Rng drop_rng = make_stream(cfg.seed, "dropout");
  Rng* dropout = cfg.dropout > 0.0 ? &drop_rng : nullptr;
  const auto queries = detail::capped(ds.valid_triples, cfg.valid_queries);

  auto batch_loss = [&](std::span<const std::size_t> batch) {
    const ContextOptions opts = cfg.context_options(&ctx_rng);
    Tape<T> tape;
    std::vector<Var<T>> logits;
    std::vector<std::size_t> truth;
    for (std::size_t idx : batch) {
      const Triple& p = g.triple(idx);
      logits.push_back(model.relation_logits(
          tape, model.build_sequence_transductive(extract_sided_context(g, p.head, p.tail, p, opts)),
          dropout));
      truth.push_back(p.rel);
    }
    const Var<T> loss = cross_entropy_loss<T>(logits, truth);
    const double value = static_cast<double>(loss.value()[0]) * static_cast<double>(batch.size());
    tape.backward(loss);
    return value;
  };
  auto validate = [&]() { return evaluate_transductive(model, g, queries, cfg); };
  return detail::run_epochs(model, g.num_triples(), cfg, sink, batch_loss, validate);
}

}  // namespace cblip
