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

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cblip/connection.hpp"
#include "cblip/context.hpp"
#include "cblip/encoder.hpp"
#include "cblip/errors.hpp"
#include "cblip/kg_store.hpp"
#include "cblip/numerics/ops.hpp"
#include "cblip/numerics/parameters.hpp"
#include "cblip/rng.hpp"

namespace cblip {

enum class TaskMode { kInductive, kTransductive };

/// How [head; relation; tail] embeddings become one triple vector before the
/// input projection.
enum class Aggregation { kConcat, kMean };

struct ModelConfig {
  TaskMode mode = TaskMode::kInductive;
  std::size_t num_relations = 0;
  /// Transductive only; inductive models carry no entity table.
  std::size_t num_entities = 0;
  std::size_t d = 32;
  Aggregation agg = Aggregation::kConcat;
  EncoderConfig encoder;
};

/// Token ids of one input sequence. Row 0 is the target. In inductive mode
/// entity slots hold Role codes; in transductive mode they hold entity ids.
struct SequenceInput {
  std::vector<std::size_t> head_ids;
  std::vector<std::size_t> rel_ids;
  std::vector<std::size_t> tail_ids;
  /// Per-neighbor side (rows 1..N-1); transductive only.
  std::vector<std::size_t> origins;
  ConnectionMatrix conn;

  std::size_t size() const { return head_ids.size(); }
};

/// Embedded encoder input: N×d_model tokens with their connection matrix.
template <typename T>
struct TokenSequence {
  Var<T> tokens;
  ConnectionMatrix conn;
  std::size_t target_index = 0;
};

template <typename T>
class CblipModel {
 public:
  CblipModel(const ModelConfig& cfg, Rng& init) : cfg_(cfg) {
    if (cfg.num_relations == 0) throw ContractError("model: no relations");
    if (cfg.d == 0) throw ContractError("model: d must be positive");
    const std::size_t d = cfg.d, dm = cfg.encoder.d_model;
    const std::size_t agg_width = cfg.agg == Aggregation::kConcat ? 3 * d : d;
    relation_emb_ = &params_.add("relation_emb", xavier_uniform<T>(cfg.num_relations, d, init));
    if (cfg.mode == TaskMode::kInductive) {
      role_emb_ = &params_.add("role_emb", xavier_uniform<T>(kNumRoles, d, init));
    } else {
      if (cfg.num_entities == 0) throw ContractError("model: transductive mode needs entities");
      entity_emb_ = &params_.add("entity_emb", xavier_uniform<T>(cfg.num_entities, d, init));
      origin_emb_ = &params_.add("origin_emb", xavier_uniform<T>(2, dm, init));
      pair_proj_w_ = &params_.add("pair_proj.weight", xavier_uniform<T>(d, dm, init));
      pair_proj_b_ = &params_.add("pair_proj.bias", Tensor<T>::matrix(1, dm));
    }
    target_marker_ = &params_.add("target_marker", xavier_uniform<T>(1, dm, init));
    input_proj_w_ = &params_.add("input_proj.weight", xavier_uniform<T>(agg_width, dm, init));
    input_proj_b_ = &params_.add("input_proj.bias", Tensor<T>::matrix(1, dm));
    encoder_ = std::make_unique<Encoder<T>>(cfg.encoder, params_, init);
    if (cfg.mode == TaskMode::kInductive) {
      out_w_ = &params_.add("score.weight", xavier_uniform<T>(dm, 1, init));
      out_b_ = &params_.add("score.bias", Tensor<T>::matrix(1, 1));
    } else {
      out_w_ = &params_.add("relation_head.weight",
                            xavier_uniform<T>(dm, cfg.num_relations, init));
      out_b_ = &params_.add("relation_head.bias", Tensor<T>::matrix(1, cfg.num_relations));
    }
  }

  CblipModel(const CblipModel&) = delete;
  CblipModel& operator=(const CblipModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }
  const Encoder<T>& encoder() const { return *encoder_; }

  /// Target first (roles HEAD/TAIL), then the context neighbors in order.
  SequenceInput build_sequence_inductive(const Context& ctx) const {
    require_mode(TaskMode::kInductive, "build_sequence_inductive");
    SequenceInput s;
    std::vector<Triple> seq{ctx.target};
    push_token(s, static_cast<std::size_t>(Role::kHead), ctx.target.rel,
               static_cast<std::size_t>(Role::kTail));
    for (const auto& n : ctx.neighbors) {
      push_token(s, static_cast<std::size_t>(n.head_role), n.triple.rel,
                 static_cast<std::size_t>(n.tail_role));
      seq.push_back(n.triple);
    }
    s.conn = build_matrix(seq);
    return s;
  }

  /// Pair token for (h, t) followed by the sided neighbors.
  SequenceInput build_sequence_transductive(const Context& ctx) const {
    require_mode(TaskMode::kTransductive, "build_sequence_transductive");
    SequenceInput s;
    std::vector<Triple> seq{ctx.target};
    push_token(s, ctx.target.head, 0, ctx.target.tail);
    for (const auto& n : ctx.neighbors) {
      push_token(s, n.triple.head, n.triple.rel, n.triple.tail);
      s.origins.push_back(static_cast<std::size_t>(n.origin));
      seq.push_back(n.triple);
    }
    s.conn = build_matrix(seq);
    return s;
  }

  /// A([e1; r; e2]) projected to d_model, one row per triple. No marker.
  Var<T> embed_triples(Tape<T>& tape, std::span<const std::size_t> heads,
                       std::span<const std::size_t> rels,
                       std::span<const std::size_t> tails) const {
    if (heads.size() != rels.size() || rels.size() != tails.size() || heads.empty()) {
      throw ContractError("embed_triples: id lists must be non-empty and equally long");
    }
    const Var<T> ent = tape.parameter(cfg_.mode == TaskMode::kInductive ? *role_emb_ : *entity_emb_);
    const Var<T> e1 = embedding_lookup(ent, heads);
    const Var<T> r = embedding_lookup(tape.parameter(*relation_emb_), rels);
    const Var<T> e2 = embedding_lookup(ent, tails);
    const Var<T> agg = cfg_.agg == Aggregation::kConcat
                           ? concat_cols<T>({e1, r, e2})
                           : scale(add(add(e1, r), e2), T{1} / T{3});
    return add_bias(matmul(agg, tape.parameter(*input_proj_w_)), tape.parameter(*input_proj_b_));
  }

  /// Single-triple form of embed_triples, 1×d_model.
  Var<T> embed_triple(Tape<T>& tape, std::size_t head, std::size_t rel,
                      std::size_t tail) const {
    const std::size_t h[] = {head}, r[] = {rel}, t[] = {tail};
    return embed_triples(tape, h, r, t);
  }

  /// Input tokens S_in (N×d_model) for a sequence.
  Var<T> embed_sequence(Tape<T>& tape, const SequenceInput& s) const {
    const std::size_t n = s.size();
    const Var<T> marker = tape.parameter(*target_marker_);
    if (cfg_.mode == TaskMode::kInductive) {
      const Var<T> proj = embed_triples(tape, s.head_ids, s.rel_ids, s.tail_ids);
      const Var<T> target = add(n == 1 ? proj : slice_rows(proj, 0, 1), marker);
      return n == 1 ? target : concat_rows<T>({target, slice_rows(proj, 1, n)});
    }
    const Var<T> ent = tape.parameter(*entity_emb_);
    const std::size_t pair_ids[] = {s.head_ids[0], s.tail_ids[0]};
    const Var<T> pair = add_bias(matmul(mean_rows(embedding_lookup(ent, pair_ids)),
                                        tape.parameter(*pair_proj_w_)),
                                 tape.parameter(*pair_proj_b_));
    const Var<T> target = add(pair, marker);
    if (n == 1) return target;
    const std::span<const std::size_t> hs(s.head_ids), rs(s.rel_ids), ts(s.tail_ids);
    const Var<T> neigh = add(embed_triples(tape, hs.subspan(1), rs.subspan(1), ts.subspan(1)),
                             embedding_lookup(tape.parameter(*origin_emb_), s.origins));
    return concat_rows<T>({target, neigh});
  }

  TokenSequence<T> build_tokens(Tape<T>& tape, const SequenceInput& s) const {
    return TokenSequence<T>{embed_sequence(tape, s), s.conn, 0};
  }

  /// y* (1×d_model): the encoder output at the target position.
  Var<T> encode_target(Tape<T>& tape, const SequenceInput& s, Rng* dropout_rng = nullptr) const {
    const Var<T> out = encoder_->encode(tape, embed_sequence(tape, s), s.conn, dropout_rng);
    return s.size() == 1 ? out : slice_rows(out, 0, 1);
  }

  /// 1×1 triple score (inductive).
  Var<T> score(Tape<T>& tape, const SequenceInput& s, Rng* dropout_rng = nullptr) const {
    require_mode(TaskMode::kInductive, "score");
    return add_bias(matmul(encode_target(tape, s, dropout_rng), tape.parameter(*out_w_)),
                    tape.parameter(*out_b_));
  }

  /// 1×|R| relation logits (transductive).
  Var<T> relation_logits(Tape<T>& tape, const SequenceInput& s,
                         Rng* dropout_rng = nullptr) const {
    require_mode(TaskMode::kTransductive, "relation_logits");
    return add_bias(matmul(encode_target(tape, s, dropout_rng), tape.parameter(*out_w_)),
                    tape.parameter(*out_b_));
  }

  /// Score of (h, r, t) against the fact graph `g`, without recording.
  T score_inductive(const KnowledgeGraph& g, const Triple& target,
                    const ContextOptions& opts) const {
    if (target.rel >= cfg_.num_relations) throw ContractError("score_inductive: relation id out of range");
    Tape<T> tape(/*record=*/false);
    return score(tape, build_sequence_inductive(extract_context(g, target, opts))).value()[0];
  }

  /// Relation logits for the pair (h, t); `exclude` is removed from the context.
  std::vector<T> relation_logits_transductive(const KnowledgeGraph& g, EntityId h, EntityId t,
                                              const std::optional<Triple>& exclude,
                                              const ContextOptions& opts) const {
    if (h >= cfg_.num_entities || t >= cfg_.num_entities) {
      throw ContractError("relation_logits_transductive: entity not seen in training");
    }
    Tape<T> tape(/*record=*/false);
    const auto& v =
        relation_logits(tape, build_sequence_transductive(extract_sided_context(g, h, t, exclude, opts)))
            .value();
    return std::vector<T>(v.values().begin(), v.values().end());
  }

 private:
  void require_mode(TaskMode m, const char* what) const {
    if (cfg_.mode != m) throw ContractError(std::string(what) + ": wrong model mode");
  }

  static void push_token(SequenceInput& s, std::size_t h, std::size_t r, std::size_t t) {
    s.head_ids.push_back(h);
    s.rel_ids.push_back(r);
    s.tail_ids.push_back(t);
  }

  ModelConfig cfg_;
  ParameterStore<T> params_;
  Parameter<T>* relation_emb_ = nullptr;
  Parameter<T>* role_emb_ = nullptr;
  Parameter<T>* entity_emb_ = nullptr;
  Parameter<T>* origin_emb_ = nullptr;
  Parameter<T>* pair_proj_w_ = nullptr;
  Parameter<T>* pair_proj_b_ = nullptr;
  Parameter<T>* target_marker_ = nullptr;
  Parameter<T>* input_proj_w_ = nullptr;
  Parameter<T>* input_proj_b_ = nullptr;
  Parameter<T>* out_w_ = nullptr;
  Parameter<T>* out_b_ = nullptr;
  std::unique_ptr<Encoder<T>> encoder_;
};

}  // namespace cblip
