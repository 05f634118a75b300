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

#include <algorithm>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "cblip/errors.hpp"
#include "cblip/kg_store.hpp"
#include "cblip/rng.hpp"

namespace cblip {

/// 1 + #(strictly better) + #(ties). Ties count against the true candidate.
template <typename S>
std::size_t rank_query(S true_score, std::span<const S> negatives) {
  std::size_t rank = 1;
  for (S s : negatives) {
    if (s >= true_score) ++rank;
  }
  return rank;
}

inline const std::vector<std::size_t>& default_hits_levels() {
  static const std::vector<std::size_t> levels{1, 3, 10};
  return levels;
}

struct RankingReport {
  std::vector<std::size_t> ranks;
  double mrr = 0.0;
  std::map<std::size_t, double> hits_at;

  double hits(std::size_t n) const {
    auto it = hits_at.find(n);
    if (it == hits_at.end()) throw ContractError("report has no hits@" + std::to_string(n));
    return it->second;
  }
};

inline RankingReport make_report(std::vector<std::size_t> ranks,
                                 const std::vector<std::size_t>& levels = default_hits_levels()) {
  RankingReport r;
  r.ranks = std::move(ranks);
  for (std::size_t n : levels) r.hits_at[n] = 0.0;
  if (r.ranks.empty()) return r;
  double rr = 0.0;
  for (std::size_t k : r.ranks) {
    rr += 1.0 / static_cast<double>(k);
    for (std::size_t n : levels) {
      if (k <= n) r.hits_at[n] += 1.0;
    }
  }
  const auto q = static_cast<double>(r.ranks.size());
  r.mrr = rr / q;
  for (auto& [n, h] : r.hits_at) h /= q;
  return r;
}

/// Pooled report plus the per-side breakdown of entity prediction.
struct EntityPredictionReport {
  RankingReport pooled;
  RankingReport head_side;
  RankingReport tail_side;
  /// Queries that had fewer than the requested number of corruptions.
  std::size_t short_queries = 0;
  /// Total corruptions missing across those queries.
  std::size_t missing_negatives = 0;
};

struct EntityEvalOptions {
  std::size_t negatives = 50;
  /// Drop corruptions that are known true triples.
  bool filter = true;
};

/// Scores each inference triple against up to `negatives` head corruptions
/// and as many tail corruptions, drawn uniformly without replacement from
/// the fact graph's entities. `scorer` maps a triple to a score.
template <typename Scorer>
EntityPredictionReport evaluate_entity_prediction(Scorer&& scorer, const KnowledgeGraph& facts,
                                                  std::span<const Triple> queries,
                                                  const TripleSet& known,
                                                  const EntityEvalOptions& opts, Rng& rng) {
  EntityPredictionReport out;
  std::vector<std::size_t> pooled, heads, tails;
  std::vector<EntityId> pool;
  std::vector<double> neg_scores;
  for (const Triple& q : queries) {
    const double true_score = static_cast<double>(scorer(q));
    for (int side = 0; side < 2; ++side) {
      pool.clear();
      for (EntityId e = 0; e < facts.num_entities(); ++e) {
        Triple c = q;
        (side == 0 ? c.head : c.tail) = e;
        if (e == (side == 0 ? q.head : q.tail)) continue;
        if (opts.filter && known.count(c)) continue;
        pool.push_back(e);
      }
      const std::size_t take = std::min(opts.negatives, pool.size());
      if (take < opts.negatives) {
        ++out.short_queries;
        out.missing_negatives += opts.negatives - take;
      }
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
      }
      neg_scores.clear();
      for (std::size_t i = 0; i < take; ++i) {
        Triple c = q;
        (side == 0 ? c.head : c.tail) = pool[i];
        neg_scores.push_back(static_cast<double>(scorer(c)));
      }
      const std::size_t rank = rank_query<double>(true_score, neg_scores);
      pooled.push_back(rank);
      (side == 0 ? heads : tails).push_back(rank);
    }
  }
  out.pooled = make_report(std::move(pooled));
  out.head_side = make_report(std::move(heads));
  out.tail_side = make_report(std::move(tails));
  return out;
}

/// Rank of the true relation among all logits. `logits_fn(triple)` returns
/// one logit per relation for the pair (triple.head, triple.tail).
template <typename LogitsFn>
RankingReport evaluate_relation_prediction(LogitsFn&& logits_fn, std::span<const Triple> queries) {
  std::vector<std::size_t> ranks;
  ranks.reserve(queries.size());
  for (const Triple& q : queries) {
    const auto logits = logits_fn(q);
    if (q.rel >= logits.size()) throw ContractError("relation id out of range of logits");
    std::vector<double> others;
    others.reserve(logits.size() - 1);
    for (std::size_t r = 0; r < logits.size(); ++r) {
      if (r != q.rel) others.push_back(static_cast<double>(logits[r]));
    }
    ranks.push_back(rank_query<double>(static_cast<double>(logits[q.rel]), others));
  }
  return make_report(std::move(ranks));
}

}  // namespace cblip
