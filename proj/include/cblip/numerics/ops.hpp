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

// Differentiable primitives over rank-2 tensors. Every op validates shapes,
// checks its output for NaN/Inf and records a backward rule when any input
// requires a gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cblip/errors.hpp"
#include "cblip/numerics/tape.hpp"
#include "cblip/numerics/tensor.hpp"
#include "cblip/rng.hpp"

namespace cblip {
namespace detail {

inline void require(bool ok, const char* op, const std::string& msg) {
  if (!ok) throw DimensionError(std::string(op) + ": " + msg);
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  require(t.rank() == 2, op, "expected a rank-2 tensor, got " + shape_string(t.shape()));
}

template <typename T>
Tensor<T> checked(Tensor<T> t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
  return t;
}

}  // namespace detail

/// C = A·B.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require_matrix(A, "matmul");
  detail::require_matrix(B, "matmul");
  detail::require(A.cols() == B.rows(), "matmul",
                  shape_string(A.shape()) + " x " + shape_string(B.shape()));
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor<T> C = Tensor<T>::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    T* c = C.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A(i, p);
      const T* brow = B.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) c[j] += av * brow[j];
    }
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(
      detail::checked(std::move(C), "matmul"), a.requires_grad() || b.requires_grad(),
      [ia, ib, n, k, m](Tape<T>& tape, const Tensor<T>& g) {
        const auto& A = tape.value(ia);
        const auto& B = tape.value(ib);
        if (tape.requires_grad(ia)) {
          auto& gA = tape.grad(ia);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              T acc{0};
              for (std::size_t j = 0; j < m; ++j) acc += g(i, j) * B(p, j);
              gA(i, p) += acc;
            }
          }
        }
        if (tape.requires_grad(ib)) {
          auto& gB = tape.grad(ib);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const T av = A(i, p);
              T* gb = gB.data() + p * m;
              const T* gr = g.data() + i * m;
              for (std::size_t j = 0; j < m; ++j) gb[j] += av * gr[j];
            }
          }
        }
      });
}

/// C = A·Bᵀ, with A n×k and B m×k.
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require_matrix(A, "matmul_nt");
  detail::require_matrix(B, "matmul_nt");
  detail::require(A.cols() == B.cols(), "matmul_nt",
                  shape_string(A.shape()) + " x " + shape_string(B.shape()) + "^T");
  const std::size_t n = A.rows(), k = A.cols(), m = B.rows();
  Tensor<T> C = Tensor<T>::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const T* ar = A.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const T* br = B.data() + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      C(i, j) = acc;
    }
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(
      detail::checked(std::move(C), "matmul_nt"), a.requires_grad() || b.requires_grad(),
      [ia, ib, n, k, m](Tape<T>& tape, const Tensor<T>& g) {
        const auto& A = tape.value(ia);
        const auto& B = tape.value(ib);
        if (tape.requires_grad(ia)) {
          auto& gA = tape.grad(ia);
          for (std::size_t i = 0; i < n; ++i) {
            T* ga = gA.data() + i * k;
            for (std::size_t j = 0; j < m; ++j) {
              const T gv = g(i, j);
              const T* br = B.data() + j * k;
              for (std::size_t p = 0; p < k; ++p) ga[p] += gv * br[p];
            }
          }
        }
        if (tape.requires_grad(ib)) {
          auto& gB = tape.grad(ib);
          for (std::size_t i = 0; i < n; ++i) {
            const T* ar = A.data() + i * k;
            for (std::size_t j = 0; j < m; ++j) {
              const T gv = g(i, j);
              T* gb = gB.data() + j * k;
              for (std::size_t p = 0; p < k; ++p) gb[p] += gv * ar[p];
            }
          }
        }
      });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require(A.shape() == B.shape(), "add",
                  shape_string(A.shape()) + " vs " + shape_string(B.shape()));
  Tensor<T> C = A;
  C += B;
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(detail::checked(std::move(C), "add"),
                       a.requires_grad() || b.requires_grad(),
                       [ia, ib](Tape<T>& tape, const Tensor<T>& g) {
                         if (tape.requires_grad(ia)) tape.grad(ia) += g;
                         if (tape.requires_grad(ib)) tape.grad(ib) += g;
                       });
}

/// Adds a 1×m bias row to every row of an n×m matrix.
template <typename T>
Var<T> add_bias(const Var<T>& a, const Var<T>& bias) {
  const auto& A = a.value();
  const auto& b = bias.value();
  detail::require_matrix(A, "add_bias");
  detail::require(b.size() == A.cols(), "add_bias",
                  shape_string(A.shape()) + " + " + shape_string(b.shape()));
  Tensor<T> C = A;
  const std::size_t n = A.rows(), m = A.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) C(i, j) += b[j];
  }
  const auto ia = a.id(), ib = bias.id();
  return a.tape().push(detail::checked(std::move(C), "add_bias"),
                       a.requires_grad() || bias.requires_grad(),
                       [ia, ib, n, m](Tape<T>& tape, const Tensor<T>& g) {
                         if (tape.requires_grad(ia)) tape.grad(ia) += g;
                         if (tape.requires_grad(ib)) {
                           auto& gb = tape.grad(ib);
                           for (std::size_t i = 0; i < n; ++i) {
                             for (std::size_t j = 0; j < m; ++j) gb[j] += g(i, j);
                           }
                         }
                       });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> C = a.value();
  for (auto& v : C.values()) v += c;
  const auto ia = a.id();
  return a.tape().push(detail::checked(std::move(C), "add_scalar"), a.requires_grad(),
                       [ia](Tape<T>& tape, const Tensor<T>& g) { tape.grad(ia) += g; });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> C = a.value();
  for (auto& v : C.values()) v *= s;
  const auto ia = a.id();
  return a.tape().push(detail::checked(std::move(C), "scale"), a.requires_grad(),
                       [ia, s](Tape<T>& tape, const Tensor<T>& g) {
                         auto& ga = tape.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
                       });
}

/// Sum of all entries as a 1×1 tensor.
template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc{0};
  for (T v : a.value().values()) acc += v;
  const auto ia = a.id();
  return a.tape().push(detail::checked(Tensor<T>::matrix(1, 1, acc), "sum"),
                       a.requires_grad(), [ia](Tape<T>& tape, const Tensor<T>& g) {
                         auto& ga = tape.grad(ia);
                         for (auto& v : ga.values()) v += g[0];
                       });
}

/// Column-wise mean over rows: n×m -> 1×m.
template <typename T>
Var<T> mean_rows(const Var<T>& a) {
  const auto& A = a.value();
  detail::require_matrix(A, "mean_rows");
  const std::size_t n = A.rows(), m = A.cols();
  detail::require(n > 0, "mean_rows", "empty input");
  Tensor<T> C = Tensor<T>::matrix(1, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) C[j] += A(i, j);
  }
  for (auto& v : C.values()) v /= static_cast<T>(n);
  const auto ia = a.id();
  return a.tape().push(detail::checked(std::move(C), "mean_rows"), a.requires_grad(),
                       [ia, n, m](Tape<T>& tape, const Tensor<T>& g) {
                         auto& ga = tape.grad(ia);
                         const T inv = T{1} / static_cast<T>(n);
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < m; ++j) ga(i, j) += g[j] * inv;
                         }
                       });
}

/// Horizontal concatenation of matrices with equal row counts.
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_cols", "no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_matrix(p.value(), "concat_cols");
    detail::require(p.rows() == n, "concat_cols",
                    "row mismatch " + shape_string(p.shape()));
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  Tensor<T> C = Tensor<T>::matrix(n, total);
  std::vector<std::size_t> ids, widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& P = p.value();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(P.row(i).begin(), P.row(i).end(), C.data() + i * total + off);
    }
    off += P.cols();
    ids.push_back(p.id());
    widths.push_back(P.cols());
  }
  return parts.front().tape().push(
      detail::checked(std::move(C), "concat_cols"), rg,
      [ids, widths, n, total](Tape<T>& tape, const Tensor<T>& g) {
        std::size_t off = 0;
        for (std::size_t q = 0; q < ids.size(); ++q) {
          if (tape.requires_grad(ids[q])) {
            auto& gp = tape.grad(ids[q]);
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t j = 0; j < widths[q]; ++j) {
                gp(i, j) += g[i * total + off + j];
              }
            }
          }
          off += widths[q];
        }
      });
}

/// Vertical concatenation of matrices with equal column counts.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t m = parts.front().cols();
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_matrix(p.value(), "concat_rows");
    detail::require(p.cols() == m, "concat_rows",
                    "column mismatch " + shape_string(p.shape()));
    total += p.rows();
    rg = rg || p.requires_grad();
  }
  Tensor<T> C = Tensor<T>::matrix(total, m);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& P = p.value();
    std::copy(P.values().begin(), P.values().end(), C.data() + off * m);
    ids.push_back(p.id());
    offsets.push_back(off * m);
    off += P.rows();
  }
  return parts.front().tape().push(
      detail::checked(std::move(C), "concat_rows"), rg,
      [ids, offsets](Tape<T>& tape, const Tensor<T>& g) {
        for (std::size_t q = 0; q < ids.size(); ++q) {
          if (!tape.requires_grad(ids[q])) continue;
          auto& gp = tape.grad(ids[q]);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[q] + i];
        }
      });
}

/// Rows [begin, end).
template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t end) {
  const auto& A = a.value();
  detail::require_matrix(A, "slice_rows");
  detail::require(begin < end && end <= A.rows(), "slice_rows",
                  "range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") of " + shape_string(A.shape()));
  const std::size_t m = A.cols();
  Tensor<T> C(Shape{end - begin, m},
              std::vector<T>(A.data() + begin * m, A.data() + end * m));
  const auto ia = a.id();
  return a.tape().push(std::move(C), a.requires_grad(),
                       [ia, begin, m](Tape<T>& tape, const Tensor<T>& g) {
                         auto& ga = tape.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[begin * m + i] += g[i];
                       });
}

/// Columns [begin, end).
template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t begin, std::size_t end) {
  const auto& A = a.value();
  detail::require_matrix(A, "slice_cols");
  detail::require(begin < end && end <= A.cols(), "slice_cols",
                  "range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") of " + shape_string(A.shape()));
  const std::size_t n = A.rows(), w = end - begin;
  Tensor<T> C = Tensor<T>::matrix(n, w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) C(i, j) = A(i, begin + j);
  }
  const auto ia = a.id();
  return a.tape().push(std::move(C), a.requires_grad(),
                       [ia, begin, n, w](Tape<T>& tape, const Tensor<T>& g) {
                         auto& ga = tape.grad(ia);
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < w; ++j) ga(i, begin + j) += g(i, j);
                         }
                       });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> C = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  return a.tape().push(std::move(C), a.requires_grad(),
                       [ia](Tape<T>& tape, const Tensor<T>& g) {
                         auto& ga = tape.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       });
}

/// Softmax along each row.
template <typename T>
Var<T> row_softmax(const Var<T>& a) {
  const auto& A = a.value();
  detail::require_matrix(A, "row_softmax");
  const std::size_t n = A.rows(), m = A.cols();
  Tensor<T> S = Tensor<T>::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    auto in = A.row(i);
    auto out = S.row(i);
    const T mx = *std::max_element(in.begin(), in.end());
    T z{0};
    for (std::size_t j = 0; j < m; ++j) z += out[j] = std::exp(in[j] - mx);
    for (std::size_t j = 0; j < m; ++j) out[j] /= z;
  }
  const auto ia = a.id();
  const auto io = a.tape().next_id();
  return a.tape().push(detail::checked(std::move(S), "row_softmax"), a.requires_grad(),
                       [ia, io, n, m](Tape<T>& tape, const Tensor<T>& g) {
                         const auto& S = tape.value(io);
                         auto& ga = tape.grad(ia);
                         for (std::size_t i = 0; i < n; ++i) {
                           T dot{0};
                           for (std::size_t j = 0; j < m; ++j) dot += g(i, j) * S(i, j);
                           for (std::size_t j = 0; j < m; ++j) {
                             ga(i, j) += S(i, j) * (g(i, j) - dot);
                           }
                         }
                       });
}

/// Log-softmax along each row.
template <typename T>
Var<T> row_log_softmax(const Var<T>& a) {
  const auto& A = a.value();
  detail::require_matrix(A, "row_log_softmax");
  const std::size_t n = A.rows(), m = A.cols();
  Tensor<T> L = Tensor<T>::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    auto in = A.row(i);
    const T mx = *std::max_element(in.begin(), in.end());
    T z{0};
    for (std::size_t j = 0; j < m; ++j) z += std::exp(in[j] - mx);
    const T lz = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) L(i, j) = in[j] - lz;
  }
  const auto ia = a.id();
  const auto io = a.tape().next_id();
  return a.tape().push(detail::checked(std::move(L), "row_log_softmax"), a.requires_grad(),
                       [ia, io, n, m](Tape<T>& tape, const Tensor<T>& g) {
                         const auto& L = tape.value(io);
                         auto& ga = tape.grad(ia);
                         for (std::size_t i = 0; i < n; ++i) {
                           T gs{0};
                           for (std::size_t j = 0; j < m; ++j) gs += g(i, j);
                           for (std::size_t j = 0; j < m; ++j) {
                             ga(i, j) += g(i, j) - std::exp(L(i, j)) * gs;
                           }
                         }
                       });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> C = a.value();
  for (auto& v : C.values()) v = v > T{0} ? v : T{0};
  const auto ia = a.id();
  return a.tape().push(std::move(C), a.requires_grad(),
                       [ia](Tape<T>& tape, const Tensor<T>& g) {
                         const auto& A = tape.value(ia);
                         auto& ga = tape.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           if (A[i] > T{0}) ga[i] += g[i];
                         }
                       });
}

/// Per-row normalization to zero mean and unit variance followed by the
/// affine map gain ⊙ x̂ + bias (both 1×m).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                  T eps = T(1e-6)) {
  const auto& X = x.value();
  detail::require_matrix(X, "layer_norm");
  const std::size_t n = X.rows(), m = X.cols();
  detail::require(gain.value().size() == m && bias.value().size() == m, "layer_norm",
                  shape_string(X.shape()) + " with affine " +
                      shape_string(gain.shape()) + "/" + shape_string(bias.shape()));
  const auto& G = gain.value();
  const auto& B = bias.value();
  Tensor<T> xhat = Tensor<T>::matrix(n, m);
  std::vector<T> inv_std(n);
  Tensor<T> Y = Tensor<T>::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = X.row(i);
    T mu{0};
    for (T v : r) mu += v;
    mu /= static_cast<T>(m);
    T var{0};
    for (T v : r) var += (v - mu) * (v - mu);
    var /= static_cast<T>(m);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      xhat(i, j) = (r[j] - mu) * inv_std[i];
      Y(i, j) = G[j] * xhat(i, j) + B[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().push(
      detail::checked(std::move(Y), "layer_norm"),
      x.requires_grad() || gain.requires_grad() || bias.requires_grad(),
      [ix, ig, ib, n, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& tape, const Tensor<T>& g) {
        const auto& G = tape.value(ig);
        if (tape.requires_grad(ig)) {
          auto& gg = tape.grad(ig);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) gg[j] += g(i, j) * xhat(i, j);
          }
        }
        if (tape.requires_grad(ib)) {
          auto& gb = tape.grad(ib);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) gb[j] += g(i, j);
          }
        }
        if (tape.requires_grad(ix)) {
          auto& gx = tape.grad(ix);
          const T inv_m = T{1} / static_cast<T>(m);
          for (std::size_t i = 0; i < n; ++i) {
            T sum_d{0}, sum_dx{0};
            for (std::size_t j = 0; j < m; ++j) {
              const T d = g(i, j) * G[j];
              sum_d += d;
              sum_dx += d * xhat(i, j);
            }
            for (std::size_t j = 0; j < m; ++j) {
              const T d = g(i, j) * G[j];
              gx(i, j) += inv_std[i] * (d - inv_m * sum_d - xhat(i, j) * inv_m * sum_dx);
            }
          }
        }
      });
}

/// Row gather: out[i] = table[ids[i]].
template <typename T>
Var<T> embedding_lookup(const Var<T>& table, std::span<const std::size_t> ids) {
  const auto& E = table.value();
  detail::require_matrix(E, "embedding_lookup");
  const std::size_t m = E.cols();
  Tensor<T> C = Tensor<T>::matrix(ids.size(), m);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= E.rows()) {
      throw ContractError("embedding_lookup: id " + std::to_string(ids[i]) +
                          " out of range for table " + shape_string(E.shape()));
    }
    std::copy(E.row(ids[i]).begin(), E.row(ids[i]).end(), C.data() + i * m);
  }
  const auto it = table.id();
  return table.tape().push(
      std::move(C), table.requires_grad(),
      [it, m, ids = std::vector<std::size_t>(ids.begin(), ids.end())](
          Tape<T>& tape, const Tensor<T>& g) {
        auto& gt = tape.grad(it);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          for (std::size_t j = 0; j < m; ++j) gt(ids[i], j) += g(i, j);
        }
      });
}

/// out[i][j] = a[i][codes[i][j] - 1] for an n×K input and an n×n grid of
/// 1-based codes in [1, K].
template <typename T>
Var<T> gather_codes(const Var<T>& a, std::span<const std::uint8_t> codes) {
  const auto& A = a.value();
  detail::require_matrix(A, "gather_codes");
  const std::size_t n = A.rows(), K = A.cols();
  detail::require(codes.size() == n * n, "gather_codes",
                  "code grid of " + std::to_string(codes.size()) + " for " +
                      shape_string(A.shape()));
  Tensor<T> C = Tensor<T>::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t c = codes[i * n + j];
      detail::require(c >= 1 && c <= K, "gather_codes", "code out of range");
      C(i, j) = A(i, c - 1);
    }
  }
  const auto ia = a.id();
  return a.tape().push(
      std::move(C), a.requires_grad(),
      [ia, n, codes = std::vector<std::uint8_t>(codes.begin(), codes.end())](
          Tape<T>& tape, const Tensor<T>& g) {
        auto& ga = tape.grad(ia);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) ga(i, codes[i * n + j] - 1) += g(i, j);
        }
      });
}

/// out[i][c - 1] = Σ_{j : codes[i][j] = c} a[i][j]; n×n -> n×K.
template <typename T>
Var<T> scatter_codes(const Var<T>& a, std::span<const std::uint8_t> codes,
                     std::size_t num_codes) {
  const auto& A = a.value();
  detail::require_matrix(A, "scatter_codes");
  const std::size_t n = A.rows();
  detail::require(A.cols() == n && codes.size() == n * n, "scatter_codes",
                  "code grid of " + std::to_string(codes.size()) + " for " +
                      shape_string(A.shape()));
  Tensor<T> C = Tensor<T>::matrix(n, num_codes);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t c = codes[i * n + j];
      detail::require(c >= 1 && c <= num_codes, "scatter_codes", "code out of range");
      C(i, c - 1) += A(i, j);
    }
  }
  const auto ia = a.id();
  return a.tape().push(
      std::move(C), a.requires_grad(),
      [ia, n, codes = std::vector<std::uint8_t>(codes.begin(), codes.end())](
          Tape<T>& tape, const Tensor<T>& g) {
        auto& ga = tape.grad(ia);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) ga(i, j) += g(i, codes[i * n + j] - 1);
        }
      });
}

/// Inverted dropout. Identity when p == 0.
template <typename T>
Var<T> dropout(const Var<T>& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  detail::require(p < 1.0, "dropout", "rate must be < 1");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(a.value().size());
  for (auto& v : mask) v = uniform_unit(rng) < p ? T{0} : keep_scale;
  Tensor<T> C = a.value();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= mask[i];
  const auto ia = a.id();
  return a.tape().push(std::move(C), a.requires_grad(),
                       [ia, mask = std::move(mask)](Tape<T>& tape, const Tensor<T>& g) {
                         auto& ga = tape.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
                       });
}

}  // namespace cblip
