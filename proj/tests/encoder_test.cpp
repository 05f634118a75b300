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

#include <chrono>
#include <cmath>
#include <numeric>

#include "cblip/encoder.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

namespace cblip {
namespace {

Tensor<double> random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor<double> t = Tensor<double>::matrix(r, c);
  for (auto& v : t.values()) v = uniform_real(rng, -scale, scale);
  return t;
}

ConnectionMatrix random_conn(Rng& rng, std::size_t n) {
  std::vector<Triple> seq(n);
  for (auto& t : seq) t = testing::random_triple(rng, 1 + n, 3);
  return build_matrix(seq);
}

void randomize_biases(Encoder<double>& enc, std::size_t layers, Rng& rng) {
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& lp = enc.layer_params(l);
    lp.conn_key_bias->value = random_matrix(rng, kNumConnectionTypes, enc.config().d_model);
    lp.conn_value_bias->value = random_matrix(rng, kNumConnectionTypes, enc.config().d_model);
  }
}

// Scalar-loop connection-biased attention for one head; biases may be null.
Tensor<double> loop_attention(const Tensor<double>& x, const ConnectionMatrix& conn,
                              const Tensor<double>& wq, const Tensor<double>& wk,
                              const Tensor<double>& wv, const Tensor<double>* ck,
                              const Tensor<double>* cv, std::size_t head, std::size_t dh,
                              double denom) {
  const std::size_t n = x.rows(), d = x.cols(), off = head * dh;
  const auto proj = [&](const Tensor<double>& w, std::size_t i, std::size_t c) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += x(i, k) * w(k, off + c);
    return s;
  };
  Tensor<double> y = Tensor<double>::matrix(n, dh);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> alpha(n);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t code = static_cast<std::size_t>(conn.at(i, j)) - 1;
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) {
        s += proj(wq, i, c) * (proj(wk, j, c) + (ck ? (*ck)(code, off + c) : 0.0));
      }
      alpha[j] = s / denom;
    }
    const double mx = *std::max_element(alpha.begin(), alpha.end());
    double z = 0.0;
    for (double& a : alpha) z += (a = std::exp(a - mx));
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t code = static_cast<std::size_t>(conn.at(i, j)) - 1;
      for (std::size_t c = 0; c < dh; ++c) {
        y(i, c) += alpha[j] / z * (proj(wv, j, c) + (cv ? (*cv)(code, off + c) : 0.0));
      }
    }
  }
  return y;
}

struct Fixture {
  EncoderConfig cfg;
  ParameterStore<double> store;
  Rng init;
  Encoder<double> enc;

  explicit Fixture(EncoderConfig c, std::uint64_t seed = 1)
      : cfg(c), init(make_stream(seed, "init")), enc(c, store, init) {}
};

TEST(CbAttention, ZeroBiasEqualsVanillaAttention) {
  Rng rng = make_stream(30, "enc");
  Fixture f(EncoderConfig{8, 2, 1, 16});
  const auto& lp = f.enc.layer_params(0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 7);
    const auto x = random_matrix(rng, n, 8);
    const auto conn = random_conn(rng, n);
    for (std::size_t h = 0; h < 2; ++h) {
      Tape<double> tape(false);
      const auto y = f.enc.cb_attention(tape, tape.constant(x), conn, 0, h);
      const auto expect = loop_attention(x, conn, lp.wq->value, lp.wk->value, lp.wv->value,
                                         nullptr, nullptr, h, 4, 4.0);
      ASSERT_LT(max_abs_diff(y.value(), expect), 1e-6);
    }
  }
}

TEST(CbAttention, MatchesLoopOracleWithBiases) {
  Rng rng = make_stream(31, "enc");
  Fixture f(EncoderConfig{8, 2, 1, 16});
  randomize_biases(f.enc, 1, rng);
  const auto& lp = f.enc.layer_params(0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_matrix(rng, 4, 8);
    const auto conn = random_conn(rng, 4);
    for (std::size_t h = 0; h < 2; ++h) {
      Tape<double> tape(false);
      const auto y = f.enc.cb_attention(tape, tape.constant(x), conn, 0, h);
      const auto expect =
          loop_attention(x, conn, lp.wq->value, lp.wk->value, lp.wv->value,
                         &lp.conn_key_bias->value, &lp.conn_value_bias->value, h, 4, 4.0);
      ASSERT_LT(max_abs_diff(y.value(), expect), 1e-6);
    }
  }
}

TEST(CbAttention, SqrtScaleOption) {
  Rng rng = make_stream(32, "enc");
  EncoderConfig cfg{8, 2, 1, 16, AttnScale::kSqrtDim};
  Fixture f(cfg);
  const auto& lp = f.enc.layer_params(0);
  const auto x = random_matrix(rng, 5, 8);
  const auto conn = random_conn(rng, 5);
  Tape<double> tape(false);
  const auto y = f.enc.cb_attention(tape, tape.constant(x), conn, 0, 1);
  EXPECT_LT(max_abs_diff(y.value(), loop_attention(x, conn, lp.wq->value, lp.wk->value,
                                                   lp.wv->value, nullptr, nullptr, 1, 4, 2.0)),
            1e-6);
}

TEST(CbAttention, SingleTokenIsValuePlusParallelBias) {
  Rng rng = make_stream(33, "enc");
  Fixture f(EncoderConfig{8, 2, 1, 16});
  randomize_biases(f.enc, 1, rng);
  const auto& lp = f.enc.layer_params(0);
  const auto x = random_matrix(rng, 1, 8);
  const Triple t{0, 0, 1};
  const auto conn = build_matrix(std::span<const Triple>(&t, 1));
  for (std::size_t h = 0; h < 2; ++h) {
    Tape<double> tape(false);
    const auto& y = f.enc.cb_attention(tape, tape.constant(x), conn, 0, h).value();
    for (std::size_t c = 0; c < 4; ++c) {
      double v = 0.0;
      for (std::size_t k = 0; k < 8; ++k) v += x(0, k) * lp.wv->value(k, h * 4 + c);
      EXPECT_NEAR(y(0, c), v + lp.conn_value_bias->value(4, h * 4 + c), 1e-12);
    }
  }
}

TEST(CbAttention, WeightRowsSumToOne) {
  Rng rng = make_stream(34, "enc");
  Fixture f(EncoderConfig{8, 2, 1, 16});
  randomize_biases(f.enc, 1, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 9);
    Tape<double> tape(false);
    Var<double> w;
    f.enc.cb_attention(tape, tape.constant(random_matrix(rng, n, 8)), random_conn(rng, n), 0, 0, &w);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += w.value()(i, j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(CbAttention, DimensionChecks) {
  Rng rng = make_stream(35, "enc");
  Fixture f(EncoderConfig{8, 2, 1, 16});
  Tape<double> tape(false);
  EXPECT_THROW(f.enc.cb_attention(tape, tape.constant(random_matrix(rng, 3, 8)),
                                  random_conn(rng, 4), 0, 0),
               ContractError);
  EXPECT_THROW(f.enc.cb_attention(tape, tape.constant(random_matrix(rng, 3, 6)),
                                  random_conn(rng, 3), 0, 0),
               ContractError);
  ParameterStore<double> store;
  Rng init = make_stream(1, "init");
  EXPECT_THROW(Encoder<double>(EncoderConfig{8, 3, 1, 16}, store, init), ContractError);
}

TEST(Encoder, VanillaHasNoBiasTensorsAndBiasesStartAtZero) {
  Fixture biased(EncoderConfig{8, 2, 2, 16});
  Fixture vanilla(EncoderConfig{8, 2, 2, 16, AttnScale::kDim, false});
  EXPECT_EQ(biased.store.size(), vanilla.store.size() + 4);
  EXPECT_FALSE(vanilla.store.contains("encoder.layer0.attn.conn_key_bias"));
  const auto& ck = biased.store.at("encoder.layer1.attn.conn_value_bias").value;
  EXPECT_EQ(ck.shape(), (Shape{7, 8}));
  for (double v : ck.values()) EXPECT_EQ(v, 0.0);
  // Same init stream: shared weights are identical, so the two encoders
  // agree at step 0.
  Rng rng = make_stream(36, "enc");
  const auto x = random_matrix(rng, 5, 8);
  const auto conn = random_conn(rng, 5);
  Tape<double> t1(false), t2(false);
  EXPECT_LT(max_abs_diff(biased.enc.encode(t1, t1.constant(x), conn).value(),
                         vanilla.enc.encode(t2, t2.constant(x), conn).value()),
            1e-12);
}

TEST(EncoderLayer, ZeroOutputWeightsReduceToDoubleLayerNorm) {
  Rng rng = make_stream(37, "enc");
  Fixture f(EncoderConfig{8, 2, 1, 16});
  randomize_biases(f.enc, 1, rng);
  const auto& lp = f.enc.layer_params(0);
  lp.wo->value.fill(0.0);
  lp.ffn_w2->value.fill(0.0);
  lp.ffn_b2->value.fill(0.0);
  lp.norm1_gain->value = random_matrix(rng, 1, 8);
  lp.norm1_bias->value = random_matrix(rng, 1, 8);
  lp.norm2_gain->value = random_matrix(rng, 1, 8);
  lp.norm2_bias->value = random_matrix(rng, 1, 8);
  const auto ln = [](const Tensor<double>& x, const Tensor<double>& g, const Tensor<double>& b) {
    Tensor<double> y = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double mean = 0.0, var = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) mean += x(i, j) / static_cast<double>(x.cols());
      for (std::size_t j = 0; j < x.cols(); ++j) {
        var += (x(i, j) - mean) * (x(i, j) - mean) / static_cast<double>(x.cols());
      }
      for (std::size_t j = 0; j < x.cols(); ++j) {
        y(i, j) = g[j] * (x(i, j) - mean) / std::sqrt(var + 1e-6) + b[j];
      }
    }
    return y;
  };
  const auto x = random_matrix(rng, 6, 8);
  Tape<double> tape(false);
  const auto y = f.enc.encoder_layer(tape, tape.constant(x), random_conn(rng, 6), 0);
  const auto expect = ln(ln(x, lp.norm1_gain->value, lp.norm1_bias->value), lp.norm2_gain->value,
                         lp.norm2_bias->value);
  EXPECT_LT(max_abs_diff(y.value(), expect), 1e-9);
}

TEST(Encoder, LayersComposeInOrder) {
  Rng rng = make_stream(38, "enc");
  Fixture one(EncoderConfig{8, 2, 1, 16});
  Fixture two(EncoderConfig{8, 2, 2, 16});
  randomize_biases(two.enc, 2, rng);
  const auto x = random_matrix(rng, 5, 8);
  const auto conn = random_conn(rng, 5);
  Tape<double> tape(false);
  const auto cx = tape.constant(x);
  // Copy values out: later ops may grow the tape and move earlier nodes.
  const Tensor<double> one_encoded = one.enc.encode(tape, cx, conn).value();
  EXPECT_EQ(one_encoded, one.enc.encoder_layer(tape, cx, conn, 0).value());
  const Tensor<double> manual =
      two.enc.encoder_layer(tape, two.enc.encoder_layer(tape, cx, conn, 0), conn, 1).value();
  const Tensor<double> two_encoded = two.enc.encode(tape, cx, conn).value();
  EXPECT_EQ(two_encoded, manual);
  EXPECT_EQ(two_encoded.shape(), x.shape());
}

TEST(Encoder, PermutationEquivariance) {
  Rng rng = make_stream(39, "enc");
  Fixture f(EncoderConfig{8, 2, 2, 16});
  randomize_biases(f.enc, 2, rng);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 7);
    const auto x = random_matrix(rng, n, 8);
    const auto conn = random_conn(rng, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    Tensor<double> px = Tensor<double>::matrix(n, 8);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 8; ++c) px(i, c) = x(perm[i], c);
    }
    Tape<double> tape(false);
    const auto& y = f.enc.encode(tape, tape.constant(x), conn).value();
    const auto& py = f.enc.encode(tape, tape.constant(px), conn.permuted(perm)).value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 8; ++c) ASSERT_NEAR(py(i, c), y(perm[i], c), 1e-5);
    }
  }
}

TEST(Encoder, OutputsFiniteOnRandomInputs) {
  Rng rng = make_stream(40, "enc");
  ParameterStore<float> store;
  Rng init = make_stream(2, "init");
  Encoder<float> enc(EncoderConfig{16, 4, 2, 32}, store, init);
  for (auto& p : store) {
    if (p.name.find("conn_") != std::string::npos) {
      for (auto& v : p.value.values()) v = static_cast<float>(uniform_real(rng, -1, 1));
    }
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 12);
    Tensor<float> x = Tensor<float>::matrix(n, 16);
    for (auto& v : x.values()) v = static_cast<float>(uniform_real(rng, -10, 10));
    Tape<float> tape(false);
    ASSERT_TRUE(enc.encode(tape, tape.constant(x), random_conn(rng, n)).value().all_finite());
  }
}

TEST(Encoder, LayerGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_stream(seed, "enc-grad");
    Fixture f(EncoderConfig{8, 2, 1, 16}, seed);
    randomize_biases(f.enc, 1, rng);
    for (auto& p : f.store) {
      if (p.name.find("norm") != std::string::npos || p.name.find(".b") != std::string::npos) {
        p.value = random_matrix(rng, p.value.rows(), p.value.cols());
      }
    }
    Parameter<double> x("x", random_matrix(rng, 5, 8));
    const auto conn = random_conn(rng, 5);
    const auto w = random_matrix(rng, 40, 1);
    std::vector<Parameter<double>*> params{&x};
    for (auto& p : f.store) params.push_back(&p);
    const double err = testing::max_gradient_error(params, [&](Tape<double>& t) {
      const auto y = f.enc.encode(t, t.parameter(x), conn);
      return sum(matmul(reshape(y, Shape{1, 40}), t.constant(w)));
    });
    EXPECT_LT(err, 1e-3) << "seed " << seed;
  }
}

TEST(Encoder, AttentionCostScalesGently) {
  ParameterStore<float> store;
  Rng init = make_stream(3, "init");
  Encoder<float> enc(EncoderConfig{32, 4, 1, 64}, store, init);
  Rng rng = make_stream(41, "timing");
  const auto best_time = [&](std::size_t n) {
    Tensor<float> x = Tensor<float>::matrix(n, 32);
    for (auto& v : x.values()) v = static_cast<float>(uniform_real(rng, -1, 1));
    std::vector<Triple> seq(n);
    for (auto& t : seq) t = testing::random_triple(rng, n, 3);
    const auto conn = build_matrix(seq);
    double best = 1e9;
    for (int rep = 0; rep < 7; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      for (int k = 0; k < 5; ++k) {
        Tape<float> tape(false);
        enc.encode(tape, tape.constant(x), conn);
      }
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    return best;
  };
  const double small = best_time(128);
  const double large = best_time(181);
  EXPECT_LE(large / small, 2.5) << small << " s vs " << large << " s";
}

}  // namespace
}  // namespace cblip
