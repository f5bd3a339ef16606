/*
 * Copyright 2026 The taskrag Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
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
#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "taskrag/types.hpp"

namespace taskrag {

template <typename Scalar>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape<Scalar>& tape() const { return *tape_; }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records forward values in topological order; backward() walks them in reverse,
// visiting each node exactly once.
template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Mat value) { return push("constant", std::move(value), false, {}); }

  Var<Scalar> variable(Mat value) { return push("variable", std::move(value), true, {}); }

  // Appends an op result. The node requires grad iff any input does; otherwise
  // the backward closure is dropped.
  Var<Scalar> record(std::string_view op, Mat value, std::initializer_list<Var<Scalar>> inputs,
                     BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    return push(op, std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  Var<Scalar> record(std::string_view op, Mat value, const std::vector<Var<Scalar>>& inputs,
                     BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    return push(op, std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  void backward(const Var<Scalar>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw ShapeError("backward: loss must be a 1x1 scalar, got [" + std::to_string(loss.rows()) +
                       "x" + std::to_string(loss.cols()) + "]");
    }
    for (auto& node : nodes_) {
      if (node.requires_grad) {
        node.grad = Mat::Zero(node.value.rows(), node.value.cols());
      } else {
        node.grad.resize(0, 0);
      }
    }
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad(0, 0) = Scalar(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.requires_grad && node.backward) node.backward(*this, i);
    }
  }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the last backward() with respect to v; zeros if v did not participate.
  Mat grad(const Var<Scalar>& v) const {
    const auto& node = nodes_[v.id()];
    if (node.grad.size() == 0) return Mat::Zero(node.value.rows(), node.value.cols());
    return node.grad;
  }

  // Accumulator used by backward closures. Only valid for nodes requiring grad.
  Mat& grad_ref(std::size_t id) { return nodes_[id].grad; }

  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    std::string_view op;
    Mat value;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<Scalar> push(std::string_view op, Mat value, bool needs_grad, BackwardFn backward) {
    if (check_finite_ && !value.allFinite()) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
    nodes_.push_back(Node{op, std::move(value), Mat{}, needs_grad, std::move(backward)});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool check_finite_ = true;
};

}  // namespace taskrag
