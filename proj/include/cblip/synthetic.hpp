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

// Generated knowledge graphs with a known rule, used to check that the model
// learns structure rather than memorizing entities.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cblip/errors.hpp"
#include "cblip/kg_store.hpp"
#include "cblip/rng.hpp"

namespace cblip {

struct InductiveRecords {
  std::vector<TripleRecord> train, valid, test_facts, infer;

  InductiveDataset dataset() const { return make_inductive_split(train, valid, test_facts, infer); }

  /// Writes <dir>/train/{train,valid}.txt and <dir>/test/{train,test}.txt.
  void write(const std::filesystem::path& dir) const;
};

struct TransductiveRecords {
  std::vector<TripleRecord> train, valid, test;

  /// Writes <dir>/{train,valid,test}.txt.
  void write(const std::filesystem::path& dir) const;
};

namespace detail {

inline void write_records(const std::vector<TripleRecord>& recs, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  for (const auto& r : recs) out << r.head << '\t' << r.rel << '\t' << r.tail << '\n';
}

inline void number_lines(std::vector<TripleRecord>& recs) {
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].line = i + 1;
}

}  // namespace detail

inline void InductiveRecords::write(const std::filesystem::path& dir) const {
  detail::write_records(train, dir / "train" / "train.txt");
  detail::write_records(valid, dir / "train" / "valid.txt");
  detail::write_records(test_facts, dir / "test" / "train.txt");
  detail::write_records(infer, dir / "test" / "test.txt");
}

inline void TransductiveRecords::write(const std::filesystem::path& dir) const {
  detail::write_records(train, dir / "train.txt");
  detail::write_records(valid, dir / "valid.txt");
  detail::write_records(test, dir / "test.txt");
}

/// Two entity-disjoint components. In each, every entity gets `r1_out`
/// r1-edges and `r2_out` r2-edges to random other entities plus `noise_out`
/// unrelated r4-edges; r3(a, c) holds exactly when r1(a, b) and r2(b, c)
/// for some b (a != c). Held-out r3 facts become validation triples in the
/// train component and inference triples in the test component.
struct CompositionKgOptions {
  std::size_t num_entities = 200;
  std::size_t train_entities = 100;
  std::size_t r1_out = 1;
  std::size_t r2_out = 1;
  std::size_t noise_out = 1;
  double valid_fraction = 0.2;
  double infer_fraction = 0.5;
  std::uint64_t seed = 7;
};

inline InductiveRecords make_composition_kg(const CompositionKgOptions& o) {
  if (o.train_entities < 3 || o.num_entities < o.train_entities + 3) {
    throw ContractError("make_composition_kg: each component needs at least 3 entities");
  }
  Rng rng = make_stream(o.seed, "composition-kg");
  InductiveRecords out;
  const auto name = [](std::size_t e) { return "e" + std::to_string(e); };

  const auto component = [&](std::size_t first, std::size_t count, double held_fraction,
                             std::vector<TripleRecord>& facts, std::vector<TripleRecord>& held) {
    std::set<std::tuple<std::size_t, int, std::size_t>> edges;
    const auto random_other = [&](std::size_t a) {
      std::size_t b;
      do {
        b = first + uniform_index(rng, count);
      } while (b == a);
      return b;
    };
    std::vector<std::vector<std::size_t>> r1(count), r2(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t a = first + i;
      for (std::size_t j = 0; j < o.r1_out; ++j) {
        const std::size_t b = random_other(a);
        if (edges.insert({a, 1, b}).second) r1[i].push_back(b);
      }
      for (std::size_t j = 0; j < o.r2_out; ++j) {
        const std::size_t b = random_other(a);
        if (edges.insert({a, 2, b}).second) r2[i].push_back(b);
      }
      for (std::size_t j = 0; j < o.noise_out; ++j) edges.insert({a, 4, random_other(a)});
    }
    std::vector<std::pair<std::size_t, std::size_t>> derived;
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t b : r1[i]) {
        for (std::size_t c : r2[b - first]) {
          if (c != first + i && edges.insert({first + i, 3, c}).second) {
            derived.emplace_back(first + i, c);
          }
        }
      }
    }
    // Base facts in generation order, then r3 facts; a seeded subset of the
    // r3 facts is held out.
    std::vector<TripleRecord> base;
    for (const auto& [h, r, t] : edges) {
      if (r != 3) base.push_back({name(h), "r" + std::to_string(r), name(t), 0});
    }
    for (std::size_t i = derived.size(); i > 1; --i) {
      std::swap(derived[i - 1], derived[uniform_index(rng, i)]);
    }
    const auto n_held = static_cast<std::size_t>(held_fraction * static_cast<double>(derived.size()) + 0.5);
    facts.insert(facts.end(), base.begin(), base.end());
    for (std::size_t i = 0; i < derived.size(); ++i) {
      TripleRecord rec{name(derived[i].first), "r3", name(derived[i].second), 0};
      (i < n_held ? held : facts).push_back(std::move(rec));
    }
  };

  component(0, o.train_entities, o.valid_fraction, out.train, out.valid);
  component(o.train_entities, o.num_entities - o.train_entities, o.infer_fraction,
            out.test_facts, out.infer);
  detail::number_lines(out.train);
  detail::number_lines(out.valid);
  detail::number_lines(out.test_facts);
  detail::number_lines(out.infer);
  return out;
}

/// Entities carry a hidden type in {0, 1, 2}, exposed only through a
/// `has_type` edge to one of three hub entities. Every other edge between
/// h and t has relation `pair_<type(h)><type(t)>`, so the relation of a
/// pair is a deterministic function of the two neighborhoods.
struct TypedPairKgOptions {
  std::size_t num_entities = 150;
  std::size_t pairs_per_entity = 4;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 11;
};

inline TransductiveRecords make_typed_pair_kg(const TypedPairKgOptions& o) {
  if (o.num_entities < 2) throw ContractError("make_typed_pair_kg: need at least 2 entities");
  Rng rng = make_stream(o.seed, "typed-pair-kg");
  TransductiveRecords out;
  std::vector<std::size_t> type(o.num_entities);
  for (std::size_t e = 0; e < o.num_entities; ++e) {
    type[e] = uniform_index(rng, 3);
    out.train.push_back({"n" + std::to_string(e), "has_type", "hub" + std::to_string(type[e]), 0});
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<TripleRecord> pairs;
  for (std::size_t e = 0; e < o.num_entities; ++e) {
    for (std::size_t j = 0; j < o.pairs_per_entity; ++j) {
      const std::size_t t = uniform_index(rng, o.num_entities);
      if (t == e || !seen.insert({e, t}).second || seen.count({t, e})) continue;
      pairs.push_back({"n" + std::to_string(e),
                       "pair_" + std::to_string(type[e]) + std::to_string(type[t]),
                       "n" + std::to_string(t), 0});
    }
  }
  for (std::size_t i = pairs.size(); i > 1; --i) {
    std::swap(pairs[i - 1], pairs[uniform_index(rng, i)]);
  }
  const auto n = static_cast<double>(pairs.size());
  const auto n_valid = static_cast<std::size_t>(o.valid_fraction * n);
  const auto n_test = static_cast<std::size_t>(o.test_fraction * n);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& dst = i < n_valid ? out.valid : i < n_valid + n_test ? out.test : out.train;
    dst.push_back(pairs[i]);
  }
  detail::number_lines(out.train);
  detail::number_lines(out.valid);
  detail::number_lines(out.test);
  return out;
}

/// In-memory transductive dataset; symbols resolve against the train records.
inline TransductiveDataset make_transductive_dataset(const TransductiveRecords& recs) {
  TransductiveDataset ds;
  for (const auto& r : recs.train) ds.graph.add(r.head, r.rel, r.tail);
  const auto resolve = [&](const std::vector<TripleRecord>& in) {
    std::vector<Triple> out;
    for (const auto& r : in) {
      const auto h = ds.graph.entities().find(r.head);
      const auto rel = ds.graph.relations().find(r.rel);
      const auto t = ds.graph.entities().find(r.tail);
      if (!h || !rel || !t) throw DatasetError("symbol not present in training triples");
      out.push_back(Triple{*h, *rel, *t});
    }
    return out;
  };
  ds.valid_triples = resolve(recs.valid);
  ds.test_triples = resolve(recs.test);
  return ds;
}

}  // namespace cblip
