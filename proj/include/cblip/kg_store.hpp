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
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cblip/errors.hpp"

namespace cblip {

using EntityId = std::size_t;
using RelationId = std::size_t;
using TripleId = std::size_t;

struct Triple {
  EntityId head = 0;
  RelationId rel = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const {
    std::uint64_t h = t.head * 0x9e3779b97f4a7c15ULL;
    h ^= t.rel + 0x7f4a7c159e3779b9ULL + (h << 6) + (h >> 2);
    h ^= t.tail + 0x94d049bb133111ebULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

/// String <-> dense id map. Ids are assigned in first-seen order.
class SymbolTable {
 public:
  std::size_t intern(std::string_view name) {
    auto it = ids_.find(std::string(name));
    if (it != ids_.end()) return it->second;
    names_.emplace_back(name);
    ids_.emplace(names_.back(), names_.size() - 1);
    return names_.size() - 1;
  }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const SymbolTable& a, const SymbolTable& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Directed multigraph of triples with per-entity incidence indices.
/// Treated as immutable once loading finishes.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Graph whose relation ids are those of `relations`.
  explicit KnowledgeGraph(SymbolTable relations) : relations_(std::move(relations)) {}

  EntityId intern_entity(std::string_view name) {
    const auto id = entities_.intern(name);
    if (id >= by_head_.size()) {
      by_head_.resize(id + 1);
      by_tail_.resize(id + 1);
    }
    return id;
  }

  RelationId intern_relation(std::string_view name) { return relations_.intern(name); }

  /// Appends a triple whose ids already exist in the symbol tables.
  TripleId add(const Triple& t) {
    if (t.head >= entities_.size() || t.tail >= entities_.size() ||
        t.rel >= relations_.size()) {
      throw ContractError("KnowledgeGraph::add: id out of range");
    }
    const TripleId id = triples_.size();
    triples_.push_back(t);
    by_head_[t.head].push_back(id);
    by_tail_[t.tail].push_back(id);
    members_.insert(t);
    return id;
  }

  TripleId add(std::string_view head, std::string_view rel, std::string_view tail) {
    const EntityId h = intern_entity(head);
    const RelationId r = intern_relation(rel);
    const EntityId t = intern_entity(tail);
    return add(Triple{h, r, t});
  }

  const SymbolTable& entities() const { return entities_; }
  const SymbolTable& relations() const { return relations_; }
  const std::vector<Triple>& triples() const { return triples_; }
  const Triple& triple(TripleId id) const { return triples_[id]; }

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  std::size_t num_triples() const { return triples_.size(); }

  const std::vector<TripleId>& by_head(EntityId e) const { return by_head_.at(e); }
  const std::vector<TripleId>& by_tail(EntityId e) const { return by_tail_.at(e); }

  bool contains(const Triple& t) const { return members_.count(t) != 0; }

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.entities_ == b.entities_ && a.relations_ == b.relations_ &&
           a.triples_ == b.triples_;
  }

 private:
  SymbolTable entities_;
  SymbolTable relations_;
  std::vector<Triple> triples_;
  std::vector<std::vector<TripleId>> by_head_;
  std::vector<std::vector<TripleId>> by_tail_;
  TripleSet members_;
};

struct GraphStats {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::size_t num_triples = 0;
  double mean_degree = 0.0;
};

inline GraphStats graph_stats(const KnowledgeGraph& g) {
  GraphStats s{g.num_entities(), g.num_relations(), g.num_triples(), 0.0};
  if (s.num_entities > 0) {
    s.mean_degree = 2.0 * static_cast<double>(s.num_triples) /
                    static_cast<double>(s.num_entities);
  }
  return s;
}

/// One line of a triple file, fields already trimmed.
struct TripleRecord {
  std::string head, rel, tail;
  std::size_t line = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Reads `head<TAB>relation<TAB>tail` lines. Blank lines are skipped.
inline std::vector<TripleRecord> read_triple_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::vector<TripleRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto tab = rest.find('\t');
      fields.push_back(detail::trim(rest.substr(0, tab)));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() != 3) {
      throw ParseError(path.string(), lineno,
                       "expected 3 tab-separated fields, got " +
                           std::to_string(fields.size()));
    }
    for (auto f : fields) {
      if (f.empty()) throw ParseError(path.string(), lineno, "empty field");
    }
    out.push_back({std::string(fields[0]), std::string(fields[1]),
                   std::string(fields[2]), lineno});
  }
  return out;
}

/// Loads a triple file into a fresh graph, interning symbols in file order.
inline KnowledgeGraph load_triples(const std::filesystem::path& path) {
  KnowledgeGraph g;
  for (const auto& r : read_triple_records(path)) g.add(r.head, r.rel, r.tail);
  return g;
}

inline void write_triples(const KnowledgeGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  for (const auto& t : g.triples()) {
    out << g.entities().name(t.head) << '\t' << g.relations().name(t.rel) << '\t'
        << g.entities().name(t.tail) << '\n';
  }
}

inline void write_triples(const KnowledgeGraph& g, const std::vector<Triple>& triples,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  for (const auto& t : triples) {
    out << g.entities().name(t.head) << '\t' << g.relations().name(t.rel) << '\t'
        << g.entities().name(t.tail) << '\n';
  }
}

/// Train graph with validation triples, plus a disjoint-entity test graph
/// (fact graph) with the inference triples to complete.
struct InductiveDataset {
  KnowledgeGraph train_graph;
  std::vector<Triple> valid_triples;
  KnowledgeGraph test_graph;
  std::vector<Triple> infer_triples;
};

/// All splits share one entity and relation table.
struct TransductiveDataset {
  KnowledgeGraph graph;
  std::vector<Triple> valid_triples;
  std::vector<Triple> test_triples;
};

namespace detail {

inline std::string list_symbols(const std::vector<std::string>& names) {
  std::ostringstream os;
  const std::size_t shown = std::min<std::size_t>(names.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) os << (i ? ", " : "") << names[i];
  if (names.size() > shown) os << ", ... (" << names.size() << " total)";
  return os.str();
}

// Interns entities of `records` into `g` without adding triples. Relations
// must already exist unless `allow_new_relations` is set.
inline std::vector<Triple> intern_side_triples(KnowledgeGraph& g,
                                               const std::vector<TripleRecord>& records,
                                               const std::filesystem::path& path,
                                               bool allow_new_relations) {
  std::vector<Triple> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    std::optional<RelationId> rel = g.relations().find(r.rel);
    if (!rel) {
      if (!allow_new_relations) {
        throw DatasetError(path.string() + ":" + std::to_string(r.line) +
                           ": unknown relation '" + r.rel + "'");
      }
      rel = g.intern_relation(r.rel);
    }
    out.push_back(Triple{g.intern_entity(r.head), *rel, g.intern_entity(r.tail)});
  }
  return out;
}

}  // namespace detail

/// Builds an inductive dataset from in-memory records. Entity tables cover
/// both files of a split; the test graph reuses the train relation table.
inline InductiveDataset make_inductive_split(const std::vector<TripleRecord>& train,
                                             const std::vector<TripleRecord>& valid,
                                             const std::vector<TripleRecord>& test_facts,
                                             const std::vector<TripleRecord>& infer,
                                             const std::string& test_origin = "test") {
  InductiveDataset ds;
  for (const auto& r : train) ds.train_graph.add(r.head, r.rel, r.tail);
  ds.valid_triples =
      detail::intern_side_triples(ds.train_graph, valid, "valid", /*allow_new_relations=*/true);

  ds.test_graph = KnowledgeGraph(ds.train_graph.relations());
  for (const auto& r : test_facts) {
    const auto rel = ds.test_graph.relations().find(r.rel);
    if (!rel) {
      throw DatasetError(test_origin + "/train.txt:" + std::to_string(r.line) +
                         ": unknown relation '" + r.rel + "'");
    }
    ds.test_graph.add(Triple{ds.test_graph.intern_entity(r.head), *rel,
                             ds.test_graph.intern_entity(r.tail)});
  }
  ds.infer_triples = detail::intern_side_triples(ds.test_graph, infer,
                                                 test_origin + "/test.txt", false);

  std::vector<std::string> overlap;
  for (const auto& name : ds.test_graph.entities().names()) {
    if (ds.train_graph.entities().find(name)) overlap.push_back(name);
  }
  if (!overlap.empty()) {
    throw DatasetError("train and test entity sets overlap: " +
                       detail::list_symbols(overlap));
  }
  return ds;
}

/// Loads train_dir/{train,valid}.txt and test_dir/{train,test}.txt.
inline InductiveDataset load_inductive_split(const std::filesystem::path& train_dir,
                                             const std::filesystem::path& test_dir) {
  return make_inductive_split(read_triple_records(train_dir / "train.txt"),
                              read_triple_records(train_dir / "valid.txt"),
                              read_triple_records(test_dir / "train.txt"),
                              read_triple_records(test_dir / "test.txt"),
                              test_dir.string());
}

/// Train and test directories of an inductive dataset: either `dir/train`
/// and `dir/test`, or `dir` itself paired with its sibling `dir_ind`.
inline std::optional<std::pair<std::filesystem::path, std::filesystem::path>>
locate_inductive_split(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (fs::is_directory(dir / "train") && fs::is_directory(dir / "test")) {
    return std::pair{dir / "train", dir / "test"};
  }
  fs::path base = dir;
  if (!base.has_filename()) base = base.parent_path();
  const fs::path sibling = base.parent_path() / (base.filename().string() + "_ind");
  if (fs::exists(base / "train.txt") && fs::exists(sibling / "test.txt")) {
    return std::pair{base, sibling};
  }
  return std::nullopt;
}

/// Loads dir/{train,valid,test}.txt. Validation and test triples must use
/// entities and relations seen in train.txt.
inline TransductiveDataset load_transductive_split(const std::filesystem::path& dir) {
  TransductiveDataset ds;
  for (const auto& r : read_triple_records(dir / "train.txt")) {
    ds.graph.add(r.head, r.rel, r.tail);
  }
  const auto resolve = [&](const std::filesystem::path& path) {
    std::vector<Triple> out;
    std::vector<std::string> unknown;
    for (const auto& r : read_triple_records(path)) {
      const auto h = ds.graph.entities().find(r.head);
      const auto rel = ds.graph.relations().find(r.rel);
      const auto t = ds.graph.entities().find(r.tail);
      if (!h) unknown.push_back(r.head);
      if (!t) unknown.push_back(r.tail);
      if (!rel) unknown.push_back(r.rel);
      if (h && rel && t) out.push_back(Triple{*h, *rel, *t});
    }
    if (!unknown.empty()) {
      throw DatasetError(path.string() + ": symbols not present in train.txt: " +
                         detail::list_symbols(unknown));
    }
    return out;
  };
  ds.valid_triples = resolve(dir / "valid.txt");
  ds.test_triples = resolve(dir / "test.txt");
  return ds;
}

}  // namespace cblip
