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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cblip/synthetic.hpp"
#include "cblip/train.hpp"
#include "test_util.hpp"

namespace cblip {
namespace {

TEST(SampleNegative, TwoEntityPoolAlwaysFlipsTheSlot) {
  Rng rng = make_stream(1, "sampling");
  const std::vector<EntityId> pool{0, 1};
  for (int i = 0; i < 200; ++i) {
    const Triple n = sample_negative(Triple{0, 3, 1}, pool, rng);
    EXPECT_EQ(n.rel, 3u);
    EXPECT_TRUE((n.head == 1 && n.tail == 1) || (n.head == 0 && n.tail == 0));
  }
}

TEST(SampleNegative, HeadSideFrequencyIsOneHalf) {
  Rng rng = make_stream(2, "sampling");
  std::vector<EntityId> pool(50);
  std::iota(pool.begin(), pool.end(), EntityId{0});
  const Triple p{3, 0, 7};
  int heads = 0;
  std::vector<int> seen(50, 0);
  for (int i = 0; i < 10000; ++i) {
    const Triple n = sample_negative(p, pool, rng);
    ASSERT_NE(n, p);
    if (n.head != p.head) {
      ++heads;
      ++seen[n.head];
    }
  }
  EXPECT_NEAR(heads / 10000.0, 0.5, 0.02);
  EXPECT_EQ(seen[3], 0);
}

TEST(SampleNegative, SameSeedSameStreamAndSmallPoolRejected) {
  std::vector<EntityId> pool(10);
  std::iota(pool.begin(), pool.end(), EntityId{0});
  Rng a = make_stream(3, "sampling"), b = make_stream(3, "sampling");
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(sample_negative(Triple{1, 0, 2}, pool, a), sample_negative(Triple{1, 0, 2}, pool, b));
  }
  const std::vector<EntityId> one{0};
  EXPECT_THROW(sample_negative(Triple{0, 0, 0}, one, a), ContractError);
}

TEST(MarginLoss, DocumentedCases) {
  const double p1[] = {2.0}, n1[] = {1.0};
  EXPECT_EQ(margin_loss(p1, n1, 0.5), 0.0);
  const double p2[] = {1.0}, n2[] = {1.0};
  EXPECT_EQ(margin_loss(p2, n2, 0.5), 0.5);
  const double p3[] = {1.0, 2.0}, n3[] = {1.0};
  EXPECT_THROW(margin_loss(p3, n3, 0.5), ContractError);
}

TEST(MarginLoss, TapeVersionMatchesLoop) {
  Rng rng = make_stream(4, "loss");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 10);
    Tape<double> tape;
    std::vector<Var<double>> pv, nv;
    double expect = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = uniform_real(rng, -2, 2), q = uniform_real(rng, -2, 2);
      pv.push_back(tape.constant(Tensor<double>::matrix({{p}})));
      nv.push_back(tape.constant(Tensor<double>::matrix({{q}})));
      expect += std::max(0.0, q - p + 1.0);
    }
    EXPECT_NEAR(margin_loss<double>(pv, nv, 1.0).value()[0], expect, 1e-12);
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogR) {
  Tape<double> tape;
  const std::vector<Var<double>> logits{tape.constant(Tensor<double>::matrix({{0.3, 0.3, 0.3, 0.3}}))};
  const std::size_t truth[] = {2};
  EXPECT_NEAR(cross_entropy_loss<double>(logits, truth).value()[0], std::log(4.0), 1e-12);
}

TEST(CrossEntropy, ApproachesZeroAsGapGrows) {
  double previous = 1e9;
  for (double gap : {1.0, 5.0, 20.0, 50.0}) {
    Tape<double> tape;
    const std::vector<Var<double>> logits{tape.constant(Tensor<double>::matrix({{0.0, gap, 0.0}}))};
    const std::size_t truth[] = {1};
    const double v = cross_entropy_loss<double>(logits, truth).value()[0];
    EXPECT_LT(v, previous);
    previous = v;
  }
  EXPECT_LT(previous, 1e-20);
}

TEST(CrossEntropy, MatchesLoopAndRejectsBadIds) {
  Rng rng = make_stream(5, "loss");
  Tape<double> tape;
  std::vector<Var<double>> logits;
  std::vector<std::size_t> truth;
  double expect = 0.0;
  for (int q = 0; q < 6; ++q) {
    Tensor<double> l = Tensor<double>::matrix(1, 5);
    for (auto& v : l.values()) v = uniform_real(rng, -3, 3);
    const std::size_t t = uniform_index(rng, 5);
    double z = 0.0;
    for (double v : l.values()) z += std::exp(v);
    expect += -(l[t] - std::log(z)) / 6.0;
    logits.push_back(tape.constant(l));
    truth.push_back(t);
  }
  EXPECT_NEAR(cross_entropy_loss<double>(logits, truth).value()[0], expect, 1e-12);
  truth[0] = 5;
  EXPECT_THROW(cross_entropy_loss<double>(logits, truth), ContractError);
}

TEST(RankQuery, DocumentedCases) {
  const double a[] = {1, 2, 3};
  EXPECT_EQ(rank_query<double>(5, a), 1u);
  const double b[] = {2, 2, 1};
  EXPECT_EQ(rank_query<double>(2, b), 3u);
  EXPECT_EQ(rank_query<double>(0, std::span<const double>{}), 1u);
}

TEST(RankQuery, MatchesSortOracle) {
  Rng rng = make_stream(6, "rank");
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> all(1 + uniform_index(rng, 30));
    for (auto& v : all) v = static_cast<double>(uniform_index(rng, 8));  // many ties
    const double truth = all[0];
    std::vector<double> negs(all.begin() + 1, all.end());
    // Pessimistic: sort descending with the true item after every equal score.
    std::vector<std::pair<double, int>> order;
    order.emplace_back(truth, 1);
    for (double v : negs) order.emplace_back(v, 0);
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    std::size_t pos = 0;
    while (order[pos].second != 1) ++pos;
    ASSERT_EQ(rank_query<double>(truth, negs), pos + 1);
  }
}

TEST(Report, HitsMonotoneAndMrrInRange) {
  const RankingReport r = make_report({1, 2, 5, 11, 51});
  EXPECT_NEAR(r.mrr, (1 + 0.5 + 0.2 + 1.0 / 11 + 1.0 / 51) / 5, 1e-15);
  EXPECT_EQ(r.hits(1), 0.2);
  EXPECT_EQ(r.hits(3), 0.4);
  EXPECT_EQ(r.hits(10), 0.6);
  EXPECT_LE(r.hits(1), r.hits(3));
  EXPECT_LE(r.hits(3), r.hits(10));
  EXPECT_THROW(r.hits(7), ContractError);
}

KnowledgeGraph star_graph(std::size_t n) {
  KnowledgeGraph g;
  g.intern_relation("r");
  g.intern_relation("s");
  for (std::size_t e = 0; e < n; ++e) g.intern_entity("e" + std::to_string(e));
  for (std::size_t e = 1; e < n; ++e) g.add(Triple{0, 0, e});
  return g;
}

TEST(EntityEvaluation, PerfectScorerGetsFullMarks) {
  const KnowledgeGraph g = star_graph(80);
  const std::vector<Triple> queries{{3, 1, 4}, {5, 1, 6}};
  const auto known = known_triples(g, queries);
  Rng rng = make_stream(7, "eval");
  const auto report = evaluate_entity_prediction(
      [&](const Triple& t) {
        return std::find(queries.begin(), queries.end(), t) != queries.end() ? 1.0 : 0.0;
      },
      g, queries, known, EntityEvalOptions{}, rng);
  EXPECT_EQ(report.pooled.mrr, 1.0);
  EXPECT_EQ(report.pooled.hits(10), 1.0);
  EXPECT_EQ(report.pooled.ranks.size(), 4u);
  EXPECT_EQ(report.head_side.ranks.size(), 2u);
  EXPECT_EQ(report.short_queries, 0u);
}

TEST(EntityEvaluation, ConstantScorerRanksLast) {
  const KnowledgeGraph g = star_graph(80);
  const std::vector<Triple> queries{{3, 1, 4}};
  Rng rng = make_stream(8, "eval");
  const auto report = evaluate_entity_prediction([](const Triple&) { return 0.0; }, g, queries,
                                                 known_triples(g, queries), EntityEvalOptions{}, rng);
  for (std::size_t r : report.pooled.ranks) EXPECT_EQ(r, 51u);
  EXPECT_EQ(report.pooled.hits(10), 0.0);
}

TEST(EntityEvaluation, FilteringRemovesKnownCorruptionsAndRecordsShortfall) {
  // Six entities: tail corruptions (0, r, e) of the query (0, r, 1) are known
  // facts for e in {2..5}, so only (0, r, 0) survives filtering.
  const KnowledgeGraph g = star_graph(6);
  const std::vector<Triple> queries{{0, 0, 1}};
  Rng rng = make_stream(9, "eval");
  std::vector<Triple> scored;
  const auto report = evaluate_entity_prediction(
      [&](const Triple& t) {
        scored.push_back(t);
        return 0.0;
      },
      g, queries, known_triples(g), EntityEvalOptions{50, true}, rng);
  for (const auto& t : scored) {
    if (t != queries[0]) {
      EXPECT_FALSE(g.contains(t));
    }
  }
  EXPECT_EQ(report.tail_side.ranks, std::vector<std::size_t>{2});
  EXPECT_EQ(report.head_side.ranks, std::vector<std::size_t>{6});
  EXPECT_EQ(report.short_queries, 2u);
  EXPECT_EQ(report.missing_negatives, 49u + 45u);

  Rng raw_rng = make_stream(9, "eval");
  const auto raw = evaluate_entity_prediction([](const Triple&) { return 0.0; }, g, queries,
                                              known_triples(g), EntityEvalOptions{50, false}, raw_rng);
  EXPECT_EQ(raw.tail_side.ranks, std::vector<std::size_t>{6});
}

TEST(EntityEvaluation, NegativesDrawnWithoutReplacement) {
  const KnowledgeGraph g = star_graph(200);
  const std::vector<Triple> queries{{7, 1, 9}};
  Rng rng = make_stream(10, "eval");
  std::vector<Triple> scored;
  evaluate_entity_prediction(
      [&](const Triple& t) {
        scored.push_back(t);
        return 0.0;
      },
      g, queries, known_triples(g, queries), EntityEvalOptions{}, rng);
  ASSERT_EQ(scored.size(), 101u);
  std::sort(scored.begin() + 1, scored.end());
  EXPECT_EQ(std::adjacent_find(scored.begin() + 1, scored.end()), scored.end());
}

TEST(EntityEvaluation, RandomScorerMrrMatchesExpectation) {
  const KnowledgeGraph g = star_graph(120);
  std::vector<Triple> queries;
  for (EntityId e = 1; e + 1 < 120; ++e) {
    for (int k = 0; k < 25; ++k) queries.push_back(Triple{e, 1, e + 1});
  }
  Rng score_rng = make_stream(11, "scores");
  Rng rng = make_stream(11, "eval");
  const auto report = evaluate_entity_prediction([&](const Triple&) { return uniform_unit(score_rng); },
                                                 g, queries, known_triples(g), EntityEvalOptions{}, rng);
  double expect = 0.0;
  for (int r = 1; r <= 51; ++r) expect += 1.0 / r / 51.0;
  EXPECT_GE(report.pooled.ranks.size(), 5000u);
  EXPECT_NEAR(report.pooled.mrr, expect, 0.01);
  EXPECT_NEAR(expect, 0.0886, 1e-4);
}

TEST(RelationEvaluation, UniformLogitsRankLastAndPerfectRanksFirst) {
  const std::vector<Triple> queries{{0, 3, 1}, {1, 10, 2}};
  const auto uniform =
      evaluate_relation_prediction([](const Triple&) { return std::vector<double>(11, 0.0); }, queries);
  for (std::size_t r : uniform.ranks) EXPECT_EQ(r, 11u);
  EXPECT_NEAR(uniform.mrr, 1.0 / 11.0, 1e-15);
  const auto perfect = evaluate_relation_prediction(
      [](const Triple& q) {
        std::vector<double> l(11, 0.0);
        l[q.rel] = 1.0;
        return l;
      },
      queries);
  EXPECT_EQ(perfect.mrr, 1.0);
}

TEST(Metrics, JsonLineHasFixedKeyOrder) {
  MetricsRecord r{3, "valid", 0.5, 0.25, 0.1, 0.2, 0.3, 0.0};
  EXPECT_EQ(r.to_json().dump(),
            R"({"epoch":3,"split":"valid","loss":0.5,"mrr":0.25,"hits1":0.1,"hits3":0.2,"hits10":0.3,"seconds":0.0})");
  r.loss.reset();
  EXPECT_NE(r.to_json().dump().find("\"loss\":null"), std::string::npos);
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  TrainConfig c;
  c.d_model = 30;
  c.heads = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.mode = TaskMode::kTransductive;
  EXPECT_NO_THROW(c.validate());
}

TEST(Training, EmptyTrainingSetIsConfigError) {
  InductiveDataset ds;
  ds.train_graph.intern_relation("r");
  TrainConfig cfg;
  cfg.epochs = 1;
  Rng init = make_stream(1, "init");
  CblipModel<float> model(cfg.model_config(1), init);
  EXPECT_THROW(train_inductive(model, ds, cfg), ConfigError);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.d = 8;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.d_ff = 16;
  cfg.m = 6;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.lr = 3e-3;
  cfg.wall_timing = false;
  return cfg;
}

TEST(Training, SameSeedSameMetricsAndDifferentSeedDiffers) {
  CompositionKgOptions opts;
  opts.num_entities = 40;
  opts.train_entities = 20;
  const InductiveDataset ds = make_composition_kg(opts).dataset();
  const auto run = [&](std::uint64_t seed) {
    TrainConfig cfg = tiny_config();
    cfg.seed = seed;
    Rng init = make_stream(seed, "init");
    CblipModel<float> model(cfg.model_config(ds.train_graph.num_relations()), init);
    std::string stream;
    train_inductive(model, ds, cfg, [&](const MetricsRecord& r) { stream += r.to_json().dump() + "\n"; });
    return stream;
  };
  const std::string a = run(5);
  EXPECT_EQ(a, run(5));
  EXPECT_NE(a, run(6));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 3);
}

TEST(Training, BestValidationWeightsAreRestored) {
  CompositionKgOptions opts;
  opts.num_entities = 40;
  opts.train_entities = 20;
  const InductiveDataset ds = make_composition_kg(opts).dataset();
  TrainConfig cfg = tiny_config();
  cfg.epochs = 4;
  Rng init = make_stream(1, "init");
  CblipModel<float> model(cfg.model_config(ds.train_graph.num_relations()), init);
  const auto result = train_inductive(model, ds, cfg);
  Rng rng = make_stream(cfg.seed, "eval");
  const auto again = evaluate_inductive(model, ds.train_graph, ds.valid_triples,
                                        known_triples(ds.train_graph, ds.valid_triples), cfg, rng);
  EXPECT_DOUBLE_EQ(again.pooled.mrr, result.best_valid_mrr);
  EXPECT_GE(result.best_epoch, 1u);
}

TEST(Training, PatienceStopsEarly) {
  CompositionKgOptions opts;
  opts.num_entities = 30;
  opts.train_entities = 15;
  const InductiveDataset ds = make_composition_kg(opts).dataset();
  TrainConfig cfg = tiny_config();
  cfg.epochs = 50;
  cfg.patience = 1;
  cfg.lr = 1e-9;  // nothing improves after the first epoch
  Rng init = make_stream(1, "init");
  CblipModel<float> model(cfg.model_config(ds.train_graph.num_relations()), init);
  const auto result = train_inductive(model, ds, cfg);
  EXPECT_LT(result.epochs_run, 50u);
}

TEST(Training, TransductiveRunsAndReportsRelationMrr) {
  TypedPairKgOptions opts;
  opts.num_entities = 30;
  const TransductiveDataset ds = make_transductive_dataset(make_typed_pair_kg(opts));
  TrainConfig cfg = tiny_config();
  cfg.mode = TaskMode::kTransductive;
  cfg.k = 1;
  Rng init = make_stream(1, "init");
  CblipModel<float> model(cfg.model_config(ds.graph.num_relations(), ds.graph.num_entities()), init);
  const auto result = train_transductive(model, ds, cfg);
  EXPECT_EQ(result.metrics.size(), 3u);
  for (const auto& m : result.metrics) {
    EXPECT_GT(m.mrr, 0.0);
    EXPECT_LE(m.mrr, 1.0);
    ASSERT_TRUE(m.loss.has_value());
    EXPECT_TRUE(std::isfinite(*m.loss));
  }
}

TEST(Synthetic, CompositionRuleHoldsAndComponentsAreDisjoint) {
  const InductiveRecords recs = make_composition_kg(CompositionKgOptions{});
  const InductiveDataset ds = recs.dataset();  // throws on overlap
  EXPECT_EQ(ds.train_graph.num_entities() + ds.test_graph.num_entities(), 200u);
  // Every r3 fact (graph or held out) has a witness b, and every witnessed
  // pair is present somewhere.
  const auto check = [](const KnowledgeGraph& g, const std::vector<Triple>& held) {
    const RelationId r1 = *g.relations().find("r1"), r2 = *g.relations().find("r2"),
                     r3 = *g.relations().find("r3");
    TripleSet r3_all;
    for (const auto& t : g.triples()) {
      if (t.rel == r3) r3_all.insert(t);
    }
    for (const auto& t : held) {
      EXPECT_EQ(t.rel, r3);
      EXPECT_FALSE(g.contains(t));
      r3_all.insert(t);
    }
    TripleSet derived;
    for (const auto& ab : g.triples()) {
      if (ab.rel != r1) continue;
      for (TripleId id : g.by_head(ab.tail)) {
        const Triple& bc = g.triple(id);
        if (bc.rel == r2 && bc.tail != ab.head) derived.insert(Triple{ab.head, r3, bc.tail});
      }
    }
    EXPECT_EQ(r3_all, derived);
    EXPECT_FALSE(held.empty());
  };
  check(ds.train_graph, ds.valid_triples);
  check(ds.test_graph, ds.infer_triples);
}

TEST(Synthetic, TypedPairsAreDeterministicFunctionOfTypes) {
  const TransductiveRecords recs = make_typed_pair_kg(TypedPairKgOptions{});
  std::map<std::string, std::string> type;
  for (const auto& r : recs.train) {
    if (r.rel == "has_type") type[r.head] = r.tail.substr(3);
  }
  for (const auto* split : {&recs.train, &recs.valid, &recs.test}) {
    for (const auto& r : *split) {
      if (r.rel == "has_type") continue;
      EXPECT_EQ(r.rel, "pair_" + type.at(r.head) + type.at(r.tail));
    }
  }
  EXPECT_FALSE(recs.test.empty());
  EXPECT_NO_THROW(make_transductive_dataset(recs));
}

}  // namespace
}  // namespace cblip
