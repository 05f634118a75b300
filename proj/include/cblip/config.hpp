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

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "cblip/errors.hpp"
#include "cblip/train.hpp"

namespace cblip {

/// Flat `key = value` run configuration. Every key has a default; unknown
/// keys are rejected. The effective map is what checkpoints echo.
class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d{
        {"mode", "inductive"},
        {"k", "2"},
        {"m", "20"},
        {"d", "32"},
        {"d_model", "32"},
        {"heads", "4"},
        {"layers", "2"},
        {"d_ff", "0"},  // 0 selects 2 * d_model
        {"agg", "concat"},
        {"merge_mode", "union"},
        {"gamma", "1.0"},
        {"lr", "0.001"},
        {"epochs", "50"},
        {"batch_size", "32"},
        {"seed", "42"},
        {"eval_negatives", "50"},
        {"attn_scale", "dim"},
        {"neighbor_sampling", "ordered"},
        {"ablation", "none"},
        {"dropout", "0"},
        {"patience", "20"},
        {"neg_multiplier", "1"},
        {"eval_filter", "on"},
        {"valid_queries", "0"},
        {"timing", "wall"},
        {"dtype", "f32"},
        {"train_dir", ""},
        {"test_dir", ""},
        {"dataset_dir", ""},
        {"out_dir", "run"},
    };
    return d;
  }

  static RunConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    RunConfig cfg;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      std::string_view body = detail::trim(std::string_view(line).substr(0, hash));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key(detail::trim(body.substr(0, eq)));
      if (!seen.insert(key).second) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": duplicate key " + key);
      }
      cfg.set(key, std::string(detail::trim(body.substr(eq + 1))));
    }
    return cfg;
  }

  /// Rebuilds a config from a checkpoint echo.
  static RunConfig from_map(const std::map<std::string, std::string>& values) {
    RunConfig cfg;
    for (const auto& [k, v] : values) cfg.set(k, v);
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  std::string to_text() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
  }

  /// Typed view; throws ConfigError on malformed values.
  TrainConfig train_config() const {
    TrainConfig c;
    c.mode = choice<TaskMode>("mode", {{"inductive", TaskMode::kInductive},
                                       {"transductive", TaskMode::kTransductive}});
    c.k = integer("k");
    c.m = integer("m");
    c.d = integer("d");
    c.d_model = integer("d_model");
    c.heads = integer("heads");
    c.layers = integer("layers");
    c.d_ff = integer("d_ff");
    if (c.d_ff == 0) c.d_ff = 2 * c.d_model;
    c.agg = choice<Aggregation>("agg", {{"concat", Aggregation::kConcat},
                                        {"mean", Aggregation::kMean}});
    c.merge_mode = choice<MergeMode>("merge_mode", {{"union", MergeMode::kUnion},
                                                    {"intersection", MergeMode::kIntersection}});
    c.gamma = real("gamma");
    c.lr = real("lr");
    c.epochs = integer("epochs");
    c.batch_size = integer("batch_size");
    c.seed = integer("seed");
    c.eval_negatives = integer("eval_negatives");
    c.attn_scale = choice<AttnScale>("attn_scale", {{"dim", AttnScale::kDim},
                                                    {"sqrt_dim", AttnScale::kSqrtDim}});
    c.neighbor_sampling = choice<NeighborSampling>(
        "neighbor_sampling",
        {{"ordered", NeighborSampling::kOrdered}, {"seeded", NeighborSampling::kSeeded}});
    c.connection_bias = choice<bool>("ablation", {{"none", true}, {"vanilla", false}});
    c.dropout = real("dropout");
    c.patience = integer("patience");
    c.neg_multiplier = integer("neg_multiplier");
    c.eval_filter = choice<bool>("eval_filter", {{"on", true}, {"off", false}});
    c.valid_queries = integer("valid_queries");
    c.wall_timing = choice<bool>("timing", {{"wall", true}, {"off", false}});
    choice<int>("dtype", {{"f32", 32}, {"f64", 64}});
    c.validate();
    return c;
  }

  bool use_f64() const { return get("dtype") == "f64"; }

 private:
  std::uint64_t integer(const std::string& key) const {
    const std::string& v = get(key);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError("config " + key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  double real(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const double out = std::stod(v, &used);
      if (used == v.size()) return out;
    } catch (const std::exception&) {
    }
    throw ConfigError("config " + key + ": expected a number, got '" + v + "'");
  }

  template <typename E>
  E choice(const std::string& key, const std::map<std::string, E>& options) const {
    const std::string& v = get(key);
    auto it = options.find(v);
    if (it == options.end()) {
      std::string allowed;
      for (const auto& [name, _] : options) allowed += (allowed.empty() ? "" : "|") + name;
      throw ConfigError("config " + key + ": '" + v + "' is not one of " + allowed);
    }
    return it->second;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace cblip
