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
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cblip/errors.hpp"
#include "cblip/kg_store.hpp"
#include "cblip/rng.hpp"

namespace cblip {

/// Entity role relative to the target triple; doubles as the row index of
/// the role embedding table.
enum class Role : std::uint8_t { kHead = 0, kTail = 1, kOther = 2 };

inline constexpr std::size_t kNumRoles = 3;

enum class MergeMode { kUnion, kIntersection };

/// Which target entity's ego graph a transductive neighbor was drawn from.
enum class Origin : std::uint8_t { kHeadSide = 0, kTailSide = 1 };

struct ContextTriple {
  TripleId id = 0;
  Triple triple;
  std::size_t hop = 0;
  Role head_role = Role::kOther;
  Role tail_role = Role::kOther;
  Origin origin = Origin::kHeadSide;

  friend bool operator==(const ContextTriple&, const ContextTriple&) = default;
};

struct Context {
  Triple target;
  std::vector<ContextTriple> neighbors;
  MergeMode merge_mode = MergeMode::kUnion;
};

/// (triple id, hop) pairs sorted by triple id.
using EgoGraph = std::vector<std::pair<TripleId, std::size_t>>;

/// Triples within k undirected hops of `e`. A triple has hop h when its
/// nearer endpoint is h-1 steps from `e`.
inline EgoGraph ego_graph(const KnowledgeGraph& g, EntityId e, std::size_t k) {
  if (e >= g.num_entities()) throw ContractError("ego_graph: entity out of range");
  if (k == 0) throw ContractError("ego_graph: k must be >= 1");
  std::unordered_map<EntityId, std::size_t> dist{{e, 0}};
  std::unordered_map<TripleId, std::size_t> hops;
  std::vector<EntityId> frontier{e}, next;
  for (std::size_t d = 0; d < k && !frontier.empty(); ++d) {
    next.clear();
    for (EntityId u : frontier) {
      for (const auto* bucket : {&g.by_head(u), &g.by_tail(u)}) {
        for (TripleId tid : *bucket) {
          hops.try_emplace(tid, d + 1);
          const Triple& t = g.triple(tid);
          const EntityId v = t.head == u ? t.tail : t.head;
          if (dist.try_emplace(v, d + 1).second) next.push_back(v);
        }
      }
    }
    std::swap(frontier, next);
  }
  EgoGraph out(hops.begin(), hops.end());
  std::sort(out.begin(), out.end());
  return out;
}

inline Role role_of(EntityId e, EntityId head, EntityId tail) {
  if (e == head) return Role::kHead;  // HEAD wins when head == tail
  if (e == tail) return Role::kTail;
  return Role::kOther;
}

struct ContextOptions {
  std::size_t k = 2;
  std::size_t m = 20;
  MergeMode merge_mode = MergeMode::kUnion;
  /// When set, the last partially included hop is sampled uniformly from
  /// this stream instead of taking the lowest triple ids.
  Rng* sampler = nullptr;
};

namespace detail {

// Orders candidates by (hop, id) and keeps the first m. With a sampler the
// boundary hop is subsampled.
inline std::vector<std::pair<std::size_t, TripleId>> select_closest(
    std::vector<std::pair<std::size_t, TripleId>> cand, std::size_t m, Rng* sampler) {
  std::sort(cand.begin(), cand.end());
  if (cand.size() <= m) return cand;
  if (sampler == nullptr || m == 0) {
    cand.resize(m);
    return cand;
  }
  const std::size_t boundary_hop = cand[m].first;
  const auto first = std::find_if(cand.begin(), cand.end(), [&](const auto& c) {
    return c.first == boundary_hop;
  });
  const auto last = std::find_if(first, cand.end(), [&](const auto& c) {
    return c.first != boundary_hop;
  });
  const std::size_t fixed = static_cast<std::size_t>(first - cand.begin());
  std::vector<std::pair<std::size_t, TripleId>> pool(first, last);
  const std::size_t want = m - fixed;
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + uniform_index(*sampler, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  cand.resize(fixed);
  cand.insert(cand.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
  std::sort(cand.begin(), cand.end());
  return cand;
}

}  // namespace detail

/// Neighborhood of the target (h, ?, t): merged ego graphs of h and t,
/// closest first, at most m triples, with every copy of `exclude` removed.
inline Context extract_context(const KnowledgeGraph& g, EntityId h, EntityId t,
                               const std::optional<Triple>& exclude, RelationId target_rel,
                               const ContextOptions& opts) {
  if (h >= g.num_entities() || t >= g.num_entities()) {
    throw ContractError("extract_context: entity out of range");
  }
  const EgoGraph eh = ego_graph(g, h, opts.k);
  const EgoGraph et = ego_graph(g, t, opts.k);

  std::vector<std::pair<std::size_t, TripleId>> cand;
  std::size_t i = 0, j = 0;
  const auto keep = [&](TripleId id) {
    return !exclude || g.triple(id) != *exclude;
  };
  while (i < eh.size() || j < et.size()) {
    if (j == et.size() || (i < eh.size() && eh[i].first < et[j].first)) {
      if (opts.merge_mode == MergeMode::kUnion && keep(eh[i].first)) {
        cand.emplace_back(eh[i].second, eh[i].first);
      }
      ++i;
    } else if (i == eh.size() || et[j].first < eh[i].first) {
      if (opts.merge_mode == MergeMode::kUnion && keep(et[j].first)) {
        cand.emplace_back(et[j].second, et[j].first);
      }
      ++j;
    } else {
      if (keep(eh[i].first)) {
        cand.emplace_back(std::min(eh[i].second, et[j].second), eh[i].first);
      }
      ++i;
      ++j;
    }
  }

  Context ctx;
  ctx.target = Triple{h, target_rel, t};
  ctx.merge_mode = opts.merge_mode;
  for (const auto& [hop, id] : detail::select_closest(std::move(cand), opts.m, opts.sampler)) {
    const Triple& f = g.triple(id);
    ctx.neighbors.push_back(
        ContextTriple{id, f, hop, role_of(f.head, h, t), role_of(f.tail, h, t), Origin::kHeadSide});
  }
  return ctx;
}

/// Context for scoring a triple: the triple itself is never its own neighbor.
inline Context extract_context(const KnowledgeGraph& g, const Triple& target,
                               const ContextOptions& opts) {
  return extract_context(g, target.head, target.tail, target, target.rel, opts);
}

/// Transductive variant: up to m closest triples from each side, head side
/// first. A triple near both entities appears once per side.
inline Context extract_sided_context(const KnowledgeGraph& g, EntityId h, EntityId t,
                                     const std::optional<Triple>& exclude,
                                     const ContextOptions& opts) {
  if (h >= g.num_entities() || t >= g.num_entities()) {
    throw ContractError("extract_sided_context: entity out of range");
  }
  Context ctx;
  ctx.target = Triple{h, 0, t};
  ctx.merge_mode = opts.merge_mode;
  for (Origin side : {Origin::kHeadSide, Origin::kTailSide}) {
    const EntityId center = side == Origin::kHeadSide ? h : t;
    std::vector<std::pair<std::size_t, TripleId>> cand;
    for (const auto& [id, hop] : ego_graph(g, center, opts.k)) {
      if (!exclude || g.triple(id) != *exclude) cand.emplace_back(hop, id);
    }
    for (const auto& [hop, id] : detail::select_closest(std::move(cand), opts.m, opts.sampler)) {
      const Triple& f = g.triple(id);
      ctx.neighbors.push_back(
          ContextTriple{id, f, hop, role_of(f.head, h, t), role_of(f.tail, h, t), side});
    }
  }
  return ctx;
}

}  // namespace cblip
