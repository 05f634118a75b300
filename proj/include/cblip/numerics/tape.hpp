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

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cblip/errors.hpp"
#include "cblip/numerics/tensor.hpp"

namespace cblip {

/// A named learnable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of forward operations, replayed in reverse by backward().
/// A tape built with record=false keeps values only (inference mode).
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<T> constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, false, {}});
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Leaf bound to a parameter. The parameter must outlive the tape's use.
  Var<T> parameter(Parameter<T>& p) {
    nodes_.push_back(Node{{}, &p.value, &p, {}, record_, {}});
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Records an op output. `fn` is dropped unless some input needs a grad.
  Var<T> push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    const bool rg = record_ && requires_grad;
    nodes_.push_back(
        Node{std::move(value), nullptr, nullptr, {}, rg, rg ? std::move(fn) : BackwardFn{}});
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, zero-allocated on first touch.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
    return n.grad;
  }

  /// Reverse sweep from a scalar loss. Parameter gradients are accumulated
  /// into Parameter::grad; the tape is cleared afterwards.
  void backward(const Var<T>& loss) {
    if (&loss.tape() != this) throw ContractError("backward: loss is on another tape");
    if (value(loss.id()).size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_string(value(loss.id()).shape()));
    }
    if (!record_) throw ContractError("backward: tape was built without recording");
    grad(loss.id())[0] = T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) {
        n.backward(*this, n.grad);
      } else if (n.param) {
        n.param->grad += n.grad;
      }
    }
    clear();
  }

  /// Id the next pushed node will receive.
  std::size_t next_id() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external;
    Parameter<T>* param;
    Tensor<T> grad;
    bool requires_grad;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool record_;
};

}  // namespace cblip
