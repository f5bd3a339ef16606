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

#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "taskrag/tape.hpp"
#include "taskrag/types.hpp"

namespace taskrag {

// Ordered collection of named dense arrays. Order is insertion order and is
// what checkpoints and optimizers iterate over.
template <typename Scalar>
class ParameterSet {
 public:
  using Mat = Matrix<Scalar>;

  struct Entry {
    std::string name;
    Mat value;
  };

  void add(std::string name, Mat value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value)});
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  Mat& at(std::string_view name) { return entries_[lookup(name)].value; }
  const Mat& at(std::string_view name) const { return entries_[lookup(name)].value; }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>());
    return out;
  }

 private:
  std::size_t lookup(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// A ParameterSet placed on a tape. Trainable entries become gradient leaves,
// the rest constants.
template <typename Scalar>
class BoundParams {
 public:
  using Predicate = std::function<bool(std::string_view)>;

  BoundParams(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, const Predicate& trainable = {})
      : tape_(&tape) {
    for (const auto& e : params) {
      const bool train = !trainable || trainable(e.name);
      Var<Scalar> v = train ? tape.variable(e.value) : tape.constant(e.value);
      vars_.emplace(e.name, v);
      order_.emplace_back(e.name, train);
    }
  }

  const Var<Scalar>& operator[](std::string_view name) const {
    auto it = vars_.find(std::string(name));
    if (it == vars_.end()) throw std::out_of_range("unbound parameter '" + std::string(name) + "'");
    return it->second;
  }

  // Gradients of trainable entries after tape.backward().
  ParameterSet<Scalar> gradients() const {
    ParameterSet<Scalar> grads;
    for (const auto& [name, train] : order_) {
      if (train) grads.add(name, tape_->grad(vars_.at(name)));
    }
    return grads;
  }

 private:
  Tape<Scalar>* tape_;
  std::unordered_map<std::string, Var<Scalar>> vars_;
  std::vector<std::pair<std::string, bool>> order_;
};

namespace detail {

template <typename Scalar>
void require_finite_gradients(const ParameterSet<Scalar>& grads) {
  for (const auto& g : grads) {
    if (!g.value.allFinite()) {
      throw NumericError("optimizer step aborted: non-finite gradient for parameter '" + g.name + "'");
    }
  }
}

}  // namespace detail

// theta <- theta - lr * (g + weight_decay * theta). The whole step is rejected
// if any gradient is non-finite.
template <typename Scalar>
void sgd_step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads, double lr,
              double weight_decay) {
  detail::require_finite_gradients(grads);
  const Scalar a = static_cast<Scalar>(lr), wd = static_cast<Scalar>(weight_decay);
  for (const auto& g : grads) {
    auto& theta = params.at(g.name);
    if (theta.rows() != g.value.rows() || theta.cols() != g.value.cols()) {
      throw ShapeError("sgd_step: gradient shape mismatch for '" + g.name + "'");
    }
    theta -= a * (g.value + wd * theta);
  }
}

// Adam with the weight-decay term applied like sgd_step (decoupled from the
// moment estimates).
template <typename Scalar>
class Adam {
 public:
  explicit Adam(double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads) {
    detail::require_finite_gradients(grads);
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& g : grads) {
      auto& theta = params.at(g.name);
      auto [it, fresh] = moments_.try_emplace(g.name);
      auto& [m, v] = it->second;
      if (fresh) {
        m = Matrix<double>::Zero(theta.rows(), theta.cols());
        v = Matrix<double>::Zero(theta.rows(), theta.cols());
      }
      const Matrix<double> gd = g.value.template cast<double>();
      m = beta1_ * m + (1.0 - beta1_) * gd;
      v = beta2_ * v + (1.0 - beta2_) * gd.cwiseProduct(gd);
      const Matrix<double> update =
          (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
      theta -= (lr_ * (update + weight_decay_ * theta.template cast<double>())).template cast<Scalar>();
    }
  }

  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<std::string, std::pair<Matrix<double>, Matrix<double>>> moments_;
};

enum class OptimizerKind { sgd, adam };

// Runtime choice between sgd_step and Adam behind one interface.
template <typename Scalar>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double weight_decay)
      : kind_(kind), lr_(lr), weight_decay_(weight_decay), adam_(lr, weight_decay) {}

  void step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads) {
    if (kind_ == OptimizerKind::sgd) {
      sgd_step(params, grads, lr_, weight_decay_);
    } else {
      adam_.step(params, grads);
    }
  }

 private:
  OptimizerKind kind_;
  double lr_, weight_decay_;
  Adam<Scalar> adam_;
};

}  // namespace taskrag
