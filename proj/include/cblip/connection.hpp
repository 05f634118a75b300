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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cblip/errors.hpp"
#include "cblip/kg_store.hpp"

namespace cblip {

/// How two triples share endpoints. Codes are 1-based, matching the rows of
/// the connection bias tables (code c uses row c - 1).
enum class ConnectionType : std::uint8_t {
  kHeadHead = 1,       // f_i.head == f_j.head
  kTailTail = 2,       // f_i.tail == f_j.tail
  kTailHead = 3,       // f_i.tail == f_j.head
  kHeadTail = 4,       // f_i.head == f_j.tail
  kParallel = 5,       // head-head and tail-tail
  kInverse = 6,        // head-tail and tail-head
  kDisjoint = 7,       // no shared endpoint
};

inline constexpr std::size_t kNumConnectionTypes = 7;

/// Several predicates can hold at once (self-loops, repeated entities).
/// Precedence: parallel, inverse, head-head, tail-tail, tail-head,
/// head-tail, then disjoint.
inline ConnectionType classify_pair(const Triple& fi, const Triple& fj) {
  const bool hh = fi.head == fj.head;
  const bool tt = fi.tail == fj.tail;
  const bool th = fi.tail == fj.head;
  const bool ht = fi.head == fj.tail;
  if (hh && tt) return ConnectionType::kParallel;
  if (ht && th) return ConnectionType::kInverse;
  if (hh) return ConnectionType::kHeadHead;
  if (tt) return ConnectionType::kTailTail;
  if (th) return ConnectionType::kTailHead;
  if (ht) return ConnectionType::kHeadTail;
  return ConnectionType::kDisjoint;
}

/// n×n grid of connection codes, stored one byte per entry.
class ConnectionMatrix {
 public:
  ConnectionMatrix() = default;
  explicit ConnectionMatrix(std::size_t n)
      : n_(n), codes_(n * n, static_cast<std::uint8_t>(ConnectionType::kDisjoint)) {}

  std::size_t size() const { return n_; }

  ConnectionType at(std::size_t i, std::size_t j) const {
    return static_cast<ConnectionType>(codes_[i * n_ + j]);
  }
  void set(std::size_t i, std::size_t j, ConnectionType c) {
    codes_[i * n_ + j] = static_cast<std::uint8_t>(c);
  }

  /// Row-major raw codes in [1, 7].
  std::span<const std::uint8_t> codes() const { return codes_; }

  /// Same matrix with positions relabelled: result(i, j) = this(perm[i], perm[j]).
  ConnectionMatrix permuted(std::span<const std::size_t> perm) const {
    if (perm.size() != n_) throw ContractError("ConnectionMatrix::permuted: size mismatch");
    ConnectionMatrix out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) out.set(i, j, at(perm[i], perm[j]));
    }
    return out;
  }

  /// Rows of digits, one line per row.
  std::string to_string() const {
    std::string s;
    s.reserve(n_ * (n_ + 1));
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) s.push_back(static_cast<char>('0' + codes_[i * n_ + j]));
      s.push_back('\n');
    }
    return s;
  }

  friend bool operator==(const ConnectionMatrix&, const ConnectionMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> codes_;
};

inline ConnectionMatrix build_matrix(std::span<const Triple> seq) {
  if (seq.empty()) throw ContractError("build_matrix: empty sequence");
  ConnectionMatrix c(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    for (std::size_t j = 0; j < seq.size(); ++j) c.set(i, j, classify_pair(seq[i], seq[j]));
  }
  return c;
}

}  // namespace cblip
