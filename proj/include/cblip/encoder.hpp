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

#include <cmath>
#include <string>
#include <vector>

#include "cblip/connection.hpp"
#include "cblip/errors.hpp"
#include "cblip/numerics/ops.hpp"
#include "cblip/numerics/parameters.hpp"
#include "cblip/rng.hpp"

namespace cblip {

/// Attention logits are divided by the per-head width (kDim) or by its
/// square root (kSqrtDim).
enum class AttnScale { kDim, kSqrtDim };

struct EncoderConfig {
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t d_ff = 64;
  AttnScale attn_scale = AttnScale::kDim;
  /// false gives the vanilla Transformer used for the ablation: no
  /// connection bias tensors are created at all.
  bool connection_bias = true;
  double dropout = 0.0;

  std::size_t head_dim() const { return d_model / heads; }
};

template <typename T>
struct EncoderLayerParams {
  Parameter<T>* wq = nullptr;
  Parameter<T>* wk = nullptr;
  Parameter<T>* wv = nullptr;
  Parameter<T>* wo = nullptr;
  // 7 × d_model; row c-1 holds the bias of connection code c, column block
  // h holds head h.
  Parameter<T>* conn_key_bias = nullptr;
  Parameter<T>* conn_value_bias = nullptr;
  Parameter<T>* ffn_w1 = nullptr;
  Parameter<T>* ffn_b1 = nullptr;
  Parameter<T>* ffn_w2 = nullptr;
  Parameter<T>* ffn_b2 = nullptr;
  Parameter<T>* norm1_gain = nullptr;
  Parameter<T>* norm1_bias = nullptr;
  Parameter<T>* norm2_gain = nullptr;
  Parameter<T>* norm2_bias = nullptr;
};

/// Stack of post-norm Transformer layers whose attention is biased by the
/// connection type of every token pair.
template <typename T>
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, ParameterStore<T>& store, Rng& init,
          const std::string& prefix = "encoder")
      : cfg_(cfg) {
    if (cfg.heads == 0 || cfg.d_model % cfg.heads != 0) {
      throw ContractError("encoder: d_model " + std::to_string(cfg.d_model) +
                          " is not divisible by heads " + std::to_string(cfg.heads));
    }
    if (cfg.layers == 0) throw ContractError("encoder: at least one layer required");
    const std::size_t d = cfg.d_model;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = prefix + ".layer" + std::to_string(l) + ".";
      EncoderLayerParams<T> lp;
      lp.wq = &store.add(p + "attn.wq", xavier_uniform<T>(d, d, init));
      lp.wk = &store.add(p + "attn.wk", xavier_uniform<T>(d, d, init));
      lp.wv = &store.add(p + "attn.wv", xavier_uniform<T>(d, d, init));
      lp.wo = &store.add(p + "attn.wo", xavier_uniform<T>(d, d, init));
      if (cfg.connection_bias) {
        lp.conn_key_bias = &store.add(p + "attn.conn_key_bias",
                                      Tensor<T>::matrix(kNumConnectionTypes, d));
        lp.conn_value_bias = &store.add(p + "attn.conn_value_bias",
                                        Tensor<T>::matrix(kNumConnectionTypes, d));
      }
      lp.ffn_w1 = &store.add(p + "ffn.w1", xavier_uniform<T>(d, cfg.d_ff, init));
      lp.ffn_b1 = &store.add(p + "ffn.b1", Tensor<T>::matrix(1, cfg.d_ff));
      lp.ffn_w2 = &store.add(p + "ffn.w2", xavier_uniform<T>(cfg.d_ff, d, init));
      lp.ffn_b2 = &store.add(p + "ffn.b2", Tensor<T>::matrix(1, d));
      lp.norm1_gain = &store.add(p + "norm1.gain", Tensor<T>::matrix(1, d, T{1}));
      lp.norm1_bias = &store.add(p + "norm1.bias", Tensor<T>::matrix(1, d));
      lp.norm2_gain = &store.add(p + "norm2.gain", Tensor<T>::matrix(1, d, T{1}));
      lp.norm2_bias = &store.add(p + "norm2.bias", Tensor<T>::matrix(1, d));
      layers_.push_back(lp);
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  const EncoderLayerParams<T>& layer_params(std::size_t l) const { return layers_.at(l); }

  T logit_scale() const {
    const auto dh = static_cast<T>(cfg_.head_dim());
    return cfg_.attn_scale == AttnScale::kDim ? T{1} / dh : T{1} / std::sqrt(dh);
  }

  /// One head of connection-biased attention over X (N×d_model) -> N×d_h.
  /// When `weights` is non-null it receives the N×N attention matrix.
  Var<T> cb_attention(Tape<T>& tape, const Var<T>& x, const ConnectionMatrix& conn,
                      std::size_t layer, std::size_t head, Var<T>* weights = nullptr) const {
    check_input(x, conn);
    const auto& lp = layers_.at(layer);
    const Var<T> q = matmul(x, tape.parameter(*lp.wq));
    const Var<T> k = matmul(x, tape.parameter(*lp.wk));
    const Var<T> v = matmul(x, tape.parameter(*lp.wv));
    return head_attention(tape, q, k, v, lp, conn, head, weights);
  }

  /// X' = LN(X1 + FFN(X1)) with X1 = LN(X + Attn(X)).
  Var<T> encoder_layer(Tape<T>& tape, const Var<T>& x, const ConnectionMatrix& conn,
                       std::size_t layer, Rng* dropout_rng = nullptr) const {
    check_input(x, conn);
    const auto& lp = layers_.at(layer);
    const Var<T> q = matmul(x, tape.parameter(*lp.wq));
    const Var<T> k = matmul(x, tape.parameter(*lp.wk));
    const Var<T> v = matmul(x, tape.parameter(*lp.wv));
    std::vector<Var<T>> heads;
    heads.reserve(cfg_.heads);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      heads.push_back(head_attention(tape, q, k, v, lp, conn, h, nullptr));
    }
    Var<T> attn = matmul(cfg_.heads == 1 ? heads.front() : concat_cols(heads),
                         tape.parameter(*lp.wo));
    if (dropout_rng) attn = dropout(attn, cfg_.dropout, *dropout_rng);
    const Var<T> x1 = layer_norm(add(x, attn), tape.parameter(*lp.norm1_gain),
                                 tape.parameter(*lp.norm1_bias));
    const Var<T> hidden =
        relu(add_bias(matmul(x1, tape.parameter(*lp.ffn_w1)), tape.parameter(*lp.ffn_b1)));
    Var<T> ffn = add_bias(matmul(hidden, tape.parameter(*lp.ffn_w2)), tape.parameter(*lp.ffn_b2));
    if (dropout_rng) ffn = dropout(ffn, cfg_.dropout, *dropout_rng);
    return layer_norm(add(x1, ffn), tape.parameter(*lp.norm2_gain),
                      tape.parameter(*lp.norm2_bias));
  }

  Var<T> encode(Tape<T>& tape, Var<T> x, const ConnectionMatrix& conn,
                Rng* dropout_rng = nullptr) const {
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      x = encoder_layer(tape, x, conn, l, dropout_rng);
    }
    return x;
  }

 private:
  void check_input(const Var<T>& x, const ConnectionMatrix& conn) const {
    if (x.value().rank() != 2 || x.cols() != cfg_.d_model) {
      throw ContractError("encoder: input " + shape_string(x.shape()) +
                          " does not have d_model=" + std::to_string(cfg_.d_model) + " columns");
    }
    if (conn.size() != x.rows()) {
      throw ContractError("encoder: connection matrix of size " + std::to_string(conn.size()) +
                          " for " + std::to_string(x.rows()) + " tokens");
    }
  }

  // α_ij = q_i·(k_j + cK[c_ij]) * scale; y_i = Σ_j softmax(α_i)_j (v_j + cV[c_ij]).
  // The bias terms are evaluated as q_i·cK[c] for all 7 codes, gathered by
  // c_ij, and as the per-code attention mass times cV.
  Var<T> head_attention(Tape<T>& tape, const Var<T>& q, const Var<T>& k, const Var<T>& v,
                        const EncoderLayerParams<T>& lp, const ConnectionMatrix& conn,
                        std::size_t head, Var<T>* weights) const {
    if (head >= cfg_.heads) throw ContractError("encoder: head index out of range");
    const std::size_t dh = cfg_.head_dim();
    const std::size_t b = head * dh, e = b + dh;
    const bool split = cfg_.heads > 1;
    const Var<T> qh = split ? slice_cols(q, b, e) : q;
    const Var<T> kh = split ? slice_cols(k, b, e) : k;
    const Var<T> vh = split ? slice_cols(v, b, e) : v;
    Var<T> scores = matmul_nt(qh, kh);
    if (lp.conn_key_bias) {
      Var<T> ck = tape.parameter(*lp.conn_key_bias);
      if (split) ck = slice_cols(ck, b, e);
      scores = add(scores, gather_codes(matmul_nt(qh, ck), conn.codes()));
    }
    const Var<T> attn = row_softmax(scale(scores, logit_scale()));
    if (weights) *weights = attn;
    Var<T> y = matmul(attn, vh);
    if (lp.conn_value_bias) {
      Var<T> cv = tape.parameter(*lp.conn_value_bias);
      if (split) cv = slice_cols(cv, b, e);
      y = add(y, matmul(scatter_codes(attn, conn.codes(), kNumConnectionTypes), cv));
    }
    return y;
  }

  EncoderConfig cfg_;
  std::vector<EncoderLayerParams<T>> layers_;
};

}  // namespace cblip
